#include "alchemist/sample.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <mutex>
#include <regex>
#include <unordered_map>

#include "alchemist/errors.hpp"

namespace alchemist {

namespace {

// Line starts in `text`: pos is a line start if pos==0 or text[pos-1]=='\n'.
bool at_line_start(const std::string& text, size_t pos) {
    return pos == 0 || text[pos - 1] == '\n';
}

long count_lines(const std::string& code) {
    if (code.empty()) return 0;
    long n = 1;
    for (char c : code)
        if (c == '\n') ++n;
    if (!code.empty() && code.back() == '\n') --n;
    return std::max<long>(n, 0);
}

std::string trim(const std::string& s) {
    size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

}  // namespace

ExtractedBlocks extract_code_blocks_ex(const std::string& text) {
    ExtractedBlocks out;
    size_t pos = 0;
    while (pos < text.size()) {
        size_t fence = text.find("```", pos);
        if (fence == std::string::npos) break;
        if (!at_line_start(text, fence)) {
            // Inline backticks do not open a block.
            pos = fence + 3;
            continue;
        }
        size_t tag_end = text.find('\n', fence + 3);
        std::string tag;
        size_t body_begin;
        if (tag_end == std::string::npos) {
            tag = trim(text.substr(fence + 3));
            body_begin = text.size();
        } else {
            tag = trim(text.substr(fence + 3, tag_end - fence - 3));
            body_begin = tag_end + 1;
        }

        // Closing fence must itself sit at a line start.
        size_t close = std::string::npos;
        size_t scan = body_begin;
        while (scan <= text.size()) {
            size_t cand = text.find("```", scan);
            if (cand == std::string::npos) break;
            if (at_line_start(text, cand)) {
                close = cand;
                break;
            }
            scan = cand + 3;
        }

        CodeBlock block;
        block.span_begin = fence;
        if (close == std::string::npos) {
            block.code = body_begin < text.size() ? text.substr(body_begin) : "";
            block.span_end = text.size();
            out.unterminated_fence = true;
            pos = text.size();
        } else {
            block.code = text.substr(body_begin, close > body_begin ? close - body_begin : 0);
            size_t after = text.find('\n', close + 3);
            block.span_end = after == std::string::npos ? text.size() : after;
            pos = block.span_end;
        }
        block.language = tag.empty() ? "" : normalize_language_tag(tag);
        block.line_count = count_lines(block.code);
        block.language = detect_language(block);
        out.blocks.push_back(std::move(block));
    }
    return out;
}

std::vector<CodeBlock> extract_code_blocks(const std::string& text) {
    return extract_code_blocks_ex(text).blocks;
}

std::string normalize_language_tag(const std::string& tag) {
    std::string t;
    t.reserve(tag.size());
    for (char c : tag) t.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    static const std::unordered_map<std::string, std::string> aliases = {
        {"py", "python"},     {"python3", "python"}, {"python2", "python"},
        {"c++", "cpp"},       {"cxx", "cpp"},        {"cc", "cpp"},
        {"js", "javascript"}, {"node", "javascript"},{"ts", "typescript"},
        {"golang", "go"},     {"rs", "rust"},        {"sh", "bash"},
        {"shell", "bash"},    {"c#", "csharp"},      {"cs", "csharp"},
    };
    auto it = aliases.find(t);
    return it != aliases.end() ? it->second : t;
}

std::string language_display_name(const std::string& tag) {
    static const std::unordered_map<std::string, std::string> names = {
        {"python", "Python"}, {"cpp", "C++"},          {"c", "C"},
        {"javascript", "JavaScript"}, {"typescript", "TypeScript"},
        {"java", "Java"},     {"go", "Go"},            {"rust", "Rust"},
        {"bash", "Bash"},     {"csharp", "C#"},        {"sql", "SQL"},
        {"ruby", "Ruby"},     {"php", "PHP"},          {"html", "HTML"},
    };
    auto it = names.find(tag);
    if (it != names.end()) return it->second;
    if (tag.empty()) return "unknown";
    std::string n = tag;
    n[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(n[0])));
    return n;
}

std::string detect_language(const CodeBlock& block) {
    if (!block.language.empty() && block.language != "unknown") return block.language;
    const std::string& code = block.code;

    struct Rule {
        const char* tag;
        const char* pattern;
    };
    // Ordered: first match wins. Patterns are cheap structural tells.
    static const std::vector<std::pair<std::string, std::regex>> rules = [] {
        std::vector<Rule> raw = {
            {"python", R"(^\s*def\s+\w+\s*\(|^\s*import\s+\w+|^\s*from\s+\w+\s+import|^\s*class\s+\w+\s*[:\(]|^\s*print\s*\()"},
            {"cpp", R"(#include\s*[<"]|\bstd::|::\w+\s*\(|\bint\s+main\s*\()"},
            {"java", R"(\bpublic\s+(static\s+)?(class|void|int)\b|System\.out\.print)"},
            {"javascript", R"(\bconsole\.log\s*\(|\bfunction\s+\w+\s*\(|=>\s*\{|^\s*(const|let)\s+\w+\s*=)"},
            {"go", R"(^\s*package\s+\w+|\bfunc\s+\w+\s*\(|fmt\.Print)"},
            {"rust", R"(\bfn\s+\w+\s*\(|\blet\s+mut\b|println!\s*\()"},
            {"bash", R"(^#!\s*/bin/(ba)?sh|^\s*echo\s+|\bfi\b\s*$)"},
            {"sql", R"((?:^|\n)\s*(SELECT|INSERT|CREATE\s+TABLE|UPDATE)\b)"},
        };
        std::vector<std::pair<std::string, std::regex>> out;
        for (const auto& r : raw)
            out.emplace_back(r.tag, std::regex(r.pattern, std::regex::multiline));
        return out;
    }();
    for (const auto& [tag, re] : rules) {
        if (std::regex_search(code, re)) return tag;
    }
    return "unknown";
}

namespace {

long whitespace_x13(const std::string& text) {
    long words = 0;
    bool in_word = false;
    for (char c : text) {
        bool ws = std::isspace(static_cast<unsigned char>(c)) != 0;
        if (!ws && !in_word) ++words;
        in_word = !ws;
    }
    return std::lround(static_cast<double>(words) * 1.3);
}

std::mutex g_tokenizer_mutex;
std::unordered_map<std::string, std::function<long(const std::string&)>>& tokenizer_registry() {
    static std::unordered_map<std::string, std::function<long(const std::string&)>> reg = {
        {kDefaultTokenizer, whitespace_x13},
    };
    return reg;
}

}  // namespace

long estimate_tokens(const std::string& text, const std::string& tokenizer_id) {
    std::function<long(const std::string&)> fn;
    {
        std::lock_guard<std::mutex> lock(g_tokenizer_mutex);
        auto& reg = tokenizer_registry();
        auto it = reg.find(tokenizer_id);
        if (it == reg.end()) throw TokenizerUnavailable(tokenizer_id);
        fn = it->second;
    }
    return std::max<long>(0, fn(text));
}

void register_tokenizer(const std::string& id, std::function<long(const std::string&)> count) {
    std::lock_guard<std::mutex> lock(g_tokenizer_mutex);
    tokenizer_registry()[id] = std::move(count);
}

Sample make_sample(std::string id, std::string source, std::string instruction,
                   std::string response, const std::string& tokenizer_id) {
    Sample s;
    s.id = std::move(id);
    s.source = std::move(source);
    s.instruction = std::move(instruction);
    s.response = std::move(response);
    refresh_derived_fields(s, tokenizer_id);
    return s;
}

void refresh_derived_fields(Sample& sample, const std::string& tokenizer_id) {
    auto extracted = extract_code_blocks_ex(sample.response);
    sample.code_blocks = std::move(extracted.blocks);
    if (extracted.unterminated_fence) sample.meta["fence_warning"] = "unterminated";
    sample.languages.clear();
    for (const auto& b : sample.code_blocks) sample.languages.insert(b.language);
    sample.token_estimate =
        estimate_tokens(sample.instruction, tokenizer_id) +
        estimate_tokens(sample.response, tokenizer_id);
}

}  // namespace alchemist
