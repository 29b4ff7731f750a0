#include "alchemist/tree_edit.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <set>
#include <stdexcept>

#include "alchemist/errors.hpp"

namespace alchemist {

int ParseTree::add_node(std::string label, int parent) {
    int idx = static_cast<int>(nodes_.size());
    nodes_.push_back(Node{std::move(label), parent, {}});
    if (parent >= 0) nodes_[static_cast<size_t>(parent)].children.push_back(idx);
    return idx;
}

namespace {

enum class TokKind { Identifier, Keyword, Number, String, Op, Open, Close, Newline };

struct Tok {
    TokKind kind;
    std::string text;
    int indent = 0;  // indent of the physical line this token starts
};

const std::set<std::string>& python_keywords() {
    static const std::set<std::string> kw = {
        "and",   "as",     "assert", "async", "await",  "break",  "class", "continue",
        "def",   "del",    "elif",   "else",  "except", "False",  "finally", "for",
        "from",  "global", "if",     "import","in",     "is",     "lambda", "None",
        "nonlocal", "not", "or",     "pass",  "raise",  "return", "True",  "try",
        "while", "with",   "yield",  "match", "case"};
    return kw;
}

const std::set<std::string>& brace_keywords() {
    // Union of common keywords across the brace-structured languages we see
    // in code corpora (C/C++/Java/JS/TS/Go/Rust/C#).
    static const std::set<std::string> kw = {
        "auto",   "bool",    "break",  "case",    "catch",  "char",   "class",  "const",
        "continue", "default", "delete", "do",    "double", "else",   "enum",   "extern",
        "final",  "finally", "float",  "fn",      "for",    "func",   "function", "goto",
        "if",     "impl",    "import", "int",     "interface", "let", "long",   "match",
        "mut",    "namespace", "new",  "nullptr", "package", "private", "protected",
        "public", "return",  "short",  "signed",  "sizeof", "static", "struct", "switch",
        "template", "this",  "throw",  "try",     "typedef", "typename", "union",
        "unsigned", "use",   "var",    "virtual", "void",   "volatile", "while"};
    return kw;
}

bool is_ident_start(char c) {
    return std::isalpha(static_cast<unsigned char>(c)) || c == '_';
}
bool is_ident_char(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_';
}

struct Lexer {
    const std::string& src;
    bool python;
    size_t pos = 0;
    int indent = 0;
    bool at_line_start = true;
    int bracket_depth = 0;

    explicit Lexer(const std::string& s, bool py) : src(s), python(py) {}

    std::vector<Tok> run() {
        std::vector<Tok> out;
        while (pos < src.size()) {
            if (at_line_start) {
                measure_indent();
                if (pos >= src.size()) break;
            }
            char c = src[pos];
            if (c == '\n') {
                ++pos;
                at_line_start = true;
                // Newlines inside brackets are continuations, not statement ends.
                if (bracket_depth == 0 && !out.empty() && out.back().kind != TokKind::Newline)
                    out.push_back({TokKind::Newline, "\n", indent});
                continue;
            }
            if (c == ' ' || c == '\t' || c == '\r') {
                ++pos;
                continue;
            }
            if (python && c == '#') {
                skip_to_eol();
                continue;
            }
            if (!python && c == '/' && pos + 1 < src.size()) {
                if (src[pos + 1] == '/') {
                    skip_to_eol();
                    continue;
                }
                if (src[pos + 1] == '*') {
                    size_t end = src.find("*/", pos + 2);
                    pos = end == std::string::npos ? src.size() : end + 2;
                    continue;
                }
            }
            if (c == '"' || c == '\'' || (c == '`' && !python)) {
                out.push_back({TokKind::String, lex_string(), indent});
                continue;
            }
            if (std::isdigit(static_cast<unsigned char>(c))) {
                out.push_back({TokKind::Number, lex_number(), indent});
                continue;
            }
            if (is_ident_start(c)) {
                std::string word = lex_ident();
                const auto& kw = python ? python_keywords() : brace_keywords();
                out.push_back({kw.count(word) ? TokKind::Keyword : TokKind::Identifier,
                               std::move(word), indent});
                continue;
            }
            if (c == '(' || c == '[' || c == '{') {
                ++bracket_depth;
                out.push_back({TokKind::Open, std::string(1, c), indent});
                ++pos;
                continue;
            }
            if (c == ')' || c == ']' || c == '}') {
                --bracket_depth;
                if (bracket_depth < 0) throw ParseFailure("unbalanced closing delimiter");
                out.push_back({TokKind::Close, std::string(1, c), indent});
                ++pos;
                continue;
            }
            out.push_back({TokKind::Op, lex_op(), indent});
        }
        if (bracket_depth != 0) throw ParseFailure("unbalanced opening delimiter");
        if (!out.empty() && out.back().kind != TokKind::Newline)
            out.push_back({TokKind::Newline, "\n", indent});
        return out;
    }

    void measure_indent() {
        int n = 0;
        while (pos < src.size() && (src[pos] == ' ' || src[pos] == '\t')) {
            n += src[pos] == '\t' ? 4 : 1;
            ++pos;
        }
        if (bracket_depth == 0) indent = n;
        at_line_start = false;
    }

    void skip_to_eol() {
        while (pos < src.size() && src[pos] != '\n') ++pos;
    }

    std::string lex_string() {
        char quote = src[pos];
        // Python triple quotes.
        if (python && pos + 2 < src.size() && src[pos + 1] == quote && src[pos + 2] == quote) {
            std::string close(3, quote);
            size_t end = src.find(close, pos + 3);
            pos = end == std::string::npos ? src.size() : end + 3;
            return "str";
        }
        ++pos;
        while (pos < src.size() && src[pos] != quote && src[pos] != '\n') {
            if (src[pos] == '\\' && pos + 1 < src.size()) ++pos;
            ++pos;
        }
        if (pos < src.size() && src[pos] == quote) ++pos;
        return "str";
    }

    std::string lex_number() {
        size_t start = pos;
        while (pos < src.size() && (std::isalnum(static_cast<unsigned char>(src[pos])) ||
                                    src[pos] == '.' || src[pos] == '_'))
            ++pos;
        return src.substr(start, pos - start);
    }

    std::string lex_ident() {
        size_t start = pos;
        while (pos < src.size() && is_ident_char(src[pos])) ++pos;
        return src.substr(start, pos - start);
    }

    std::string lex_op() {
        static const std::vector<std::string> multi = {
            "<<=", ">>=", "===", "!==", "...", "->", "=>", "==", "!=", "<=", ">=", "&&",
            "||", "+=", "-=", "*=", "/=", "%=", "//", "**", "::", "++", "--", "<<", ">>"};
        for (const auto& m : multi) {
            if (src.compare(pos, m.size(), m) == 0) {
                pos += m.size();
                return m;
            }
        }
        return std::string(1, src[pos++]);
    }
};

// Splits a token stream into logical statements (Newline-terminated) and
// statement-level brace blocks for the brace grammar.
struct TreeBuilder {
    const std::vector<Tok>& toks;
    ParseTree tree;
    std::map<std::string, int> ident_ids;

    explicit TreeBuilder(const std::vector<Tok>& t) : toks(t) {}

    std::string leaf_label(const Tok& t) {
        if (t.kind == TokKind::Identifier) {
            auto [it, inserted] = ident_ids.emplace(t.text, static_cast<int>(ident_ids.size()));
            return "$" + std::to_string(it->second);
        }
        return t.text;
    }

    // Adds tokens [begin, end) of one statement under `stmt`, building nested
    // group nodes for brackets.
    size_t add_group(size_t begin, size_t end, int parent) {
        size_t i = begin;
        while (i < end) {
            const Tok& t = toks[i];
            if (t.kind == TokKind::Newline) {
                ++i;
                continue;
            }
            if (t.kind == TokKind::Open) {
                static const std::map<std::string, std::string> closer = {
                    {"(", ")"}, {"[", "]"}, {"{", "}"}};
                int group = tree.add_node(t.text + closer.at(t.text), parent);
                size_t j = match_close(i);
                add_group(i + 1, j, group);
                i = j + 1;
                continue;
            }
            if (t.kind == TokKind::Close) {
                ++i;  // matched by caller
                continue;
            }
            tree.add_node(leaf_label(t), parent);
            ++i;
        }
        return i;
    }

    size_t match_close(size_t open_idx) const {
        int depth = 0;
        for (size_t j = open_idx; j < toks.size(); ++j) {
            if (toks[j].kind == TokKind::Open) ++depth;
            else if (toks[j].kind == TokKind::Close) {
                if (--depth == 0) return j;
            }
        }
        throw ParseFailure("unbalanced opening delimiter");
    }

    std::string stmt_label(size_t begin, size_t end) const {
        for (size_t i = begin; i < end; ++i) {
            if (toks[i].kind == TokKind::Keyword) return toks[i].text;
            if (toks[i].kind != TokKind::Newline) break;
        }
        return "stmt";
    }
};

ParseTree build_python_tree(const std::vector<Tok>& toks) {
    TreeBuilder b(toks);
    if (toks.empty()) return std::move(b.tree);
    int root = b.tree.add_node("module", -1);

    // Statement spans: [begin, end) delimited by Newline tokens.
    struct Stmt {
        size_t begin, end;
        int indent;
    };
    std::vector<Stmt> stmts;
    size_t i = 0;
    while (i < toks.size()) {
        if (toks[i].kind == TokKind::Newline) {
            ++i;
            continue;
        }
        size_t j = i;
        while (j < toks.size() && toks[j].kind != TokKind::Newline) ++j;
        stmts.push_back({i, j, toks[i].indent});
        i = j + 1;
    }

    // indent stack: (indent level, parent node for statements at that level)
    std::vector<std::pair<int, int>> stack = {{0, root}};
    int pending_block_owner = -1;
    int pending_indent = -1;
    for (const Stmt& st : stmts) {
        if (pending_block_owner >= 0 && st.indent > pending_indent) {
            int block = b.tree.add_node("block", pending_block_owner);
            stack.emplace_back(st.indent, block);
        }
        pending_block_owner = -1;
        while (stack.size() > 1 && st.indent < stack.back().first) stack.pop_back();
        int parent = stack.back().second;
        int stmt_node = b.tree.add_node(b.stmt_label(st.begin, st.end), parent);
        b.add_group(st.begin, st.end, stmt_node);
        // A trailing ':' opens a nested block.
        if (st.end > st.begin) {
            const Tok& last = toks[st.end - 1];
            if (last.kind == TokKind::Op && last.text == ":") {
                pending_block_owner = stmt_node;
                pending_indent = st.indent;
            }
        }
    }
    return std::move(b.tree);
}

ParseTree build_brace_tree(const std::vector<Tok>& toks) {
    TreeBuilder b(toks);
    if (toks.empty()) return std::move(b.tree);
    int root = b.tree.add_node("module", -1);

    // Recursive descent over statements; '{' at statement level opens a block
    // child of the current statement, ';' and newlines end statements.
    struct Walker {
        TreeBuilder& b;
        const std::vector<Tok>& toks;

        void parse_block(size_t begin, size_t end, int parent) {
            size_t i = begin;
            while (i < end) {
                const Tok& t = toks[i];
                if (t.kind == TokKind::Newline ||
                    (t.kind == TokKind::Op && t.text == ";")) {
                    ++i;
                    continue;
                }
                // One statement: up to ';', newline outside brackets, or '{'.
                size_t j = i;
                int depth = 0;
                bool opens_block = false;
                while (j < end) {
                    const Tok& u = toks[j];
                    if (u.kind == TokKind::Open) {
                        if (u.text == "{" && depth == 0) {
                            opens_block = true;
                            break;
                        }
                        ++depth;
                    } else if (u.kind == TokKind::Close) {
                        --depth;
                    } else if (depth == 0 &&
                               (u.kind == TokKind::Newline ||
                                (u.kind == TokKind::Op && u.text == ";"))) {
                        break;
                    }
                    ++j;
                }
                int stmt_node = b.tree.add_node(b.stmt_label(i, j), parent);
                b.add_group(i, j, stmt_node);
                if (opens_block) {
                    size_t close = b.match_close(j);
                    int block = b.tree.add_node("block", stmt_node);
                    parse_block(j + 1, close, block);
                    i = close + 1;
                } else {
                    i = j;
                }
            }
        }
    };
    Walker{b, toks}.parse_block(0, toks.size(), root);
    return std::move(b.tree);
}

struct PostorderView {
    std::vector<std::string> labels;  // 1-based: labels[1..n]
    std::vector<int> lml;             // leftmost-leaf postorder index per node
    std::vector<int> keyroots;

    explicit PostorderView(const ParseTree& t) {
        int n = static_cast<int>(t.size());
        labels.resize(static_cast<size_t>(n) + 1);
        lml.resize(static_cast<size_t>(n) + 1);
        if (n == 0) return;
        std::vector<int> order;
        order.reserve(static_cast<size_t>(n));
        postorder(t, t.root(), order);
        std::vector<int> post_index(static_cast<size_t>(n));
        for (int k = 0; k < n; ++k) post_index[static_cast<size_t>(order[static_cast<size_t>(k)])] = k + 1;
        for (int k = 0; k < n; ++k) {
            int node = order[static_cast<size_t>(k)];
            labels[static_cast<size_t>(k) + 1] = t.node(node).label;
            int leaf = node;
            while (!t.node(leaf).children.empty()) leaf = t.node(leaf).children.front();
            lml[static_cast<size_t>(k) + 1] = post_index[static_cast<size_t>(leaf)];
        }
        std::vector<char> seen(static_cast<size_t>(n) + 1, 0);
        for (int k = n; k >= 1; --k) {
            if (!seen[static_cast<size_t>(lml[static_cast<size_t>(k)])]) {
                keyroots.push_back(k);
                seen[static_cast<size_t>(lml[static_cast<size_t>(k)])] = 1;
            }
        }
        std::sort(keyroots.begin(), keyroots.end());
    }

    static void postorder(const ParseTree& t, int node, std::vector<int>& out) {
        for (int c : t.node(node).children) postorder(t, c, out);
        out.push_back(node);
    }
};

}  // namespace

long tree_edit_distance(const ParseTree& a, const ParseTree& b) {
    const int n = static_cast<int>(a.size());
    const int m = static_cast<int>(b.size());
    if (n == 0) return m;
    if (m == 0) return n;

    PostorderView A(a), B(b);
    std::vector<std::vector<long>> td(static_cast<size_t>(n) + 1,
                                      std::vector<long>(static_cast<size_t>(m) + 1, 0));
    std::vector<std::vector<long>> fd(static_cast<size_t>(n) + 2,
                                      std::vector<long>(static_cast<size_t>(m) + 2, 0));

    for (int i : A.keyroots) {
        for (int j : B.keyroots) {
            const int li = A.lml[static_cast<size_t>(i)];
            const int lj = B.lml[static_cast<size_t>(j)];
            // fd indices are offset by li/lj; index [x][y] = forest distance of
            // A[li..x] vs B[lj..y], with li-1 / lj-1 meaning the empty forest.
            auto F = [&](int x, int y) -> long& {
                return fd[static_cast<size_t>(x - li + 1)][static_cast<size_t>(y - lj + 1)];
            };
            F(li - 1, lj - 1) = 0;
            for (int x = li; x <= i; ++x) F(x, lj - 1) = F(x - 1, lj - 1) + 1;
            for (int y = lj; y <= j; ++y) F(li - 1, y) = F(li - 1, y - 1) + 1;
            for (int x = li; x <= i; ++x) {
                for (int y = lj; y <= j; ++y) {
                    if (A.lml[static_cast<size_t>(x)] == li && B.lml[static_cast<size_t>(y)] == lj) {
                        long relabel =
                            A.labels[static_cast<size_t>(x)] == B.labels[static_cast<size_t>(y)] ? 0 : 1;
                        F(x, y) = std::min({F(x - 1, y) + 1, F(x, y - 1) + 1,
                                            F(x - 1, y - 1) + relabel});
                        td[static_cast<size_t>(x)][static_cast<size_t>(y)] = F(x, y);
                    } else {
                        F(x, y) = std::min(
                            {F(x - 1, y) + 1, F(x, y - 1) + 1,
                             F(A.lml[static_cast<size_t>(x)] - 1, B.lml[static_cast<size_t>(y)] - 1) +
                                 td[static_cast<size_t>(x)][static_cast<size_t>(y)]});
                    }
                }
            }
        }
    }
    return td[static_cast<size_t>(n)][static_cast<size_t>(m)];
}

ParseTree parse_code(const std::string& code, const std::string& language) {
    const bool python = language == "python";
    Lexer lexer(code, python);
    std::vector<Tok> toks = lexer.run();
    if (toks.empty()) return ParseTree{};
    return python ? build_python_tree(toks) : build_brace_tree(toks);
}

TreeEditResult ast_edit_distance(const std::string& code_a, const std::string& code_b,
                                 const std::string& language) {
    ParseTree ta = parse_code(code_a, language);
    ParseTree tb = parse_code(code_b, language);
    TreeEditResult r;
    r.raw = tree_edit_distance(ta, tb);
    size_t denom = std::max(ta.size(), tb.size());
    r.normalized = denom == 0 ? 0.0 : static_cast<double>(r.raw) / static_cast<double>(denom);
    return r;
}

}  // namespace alchemist
