#pragma once

#include <string>
#include <vector>

namespace alchemist {

/// Ordered labeled tree. Children keep insertion order; the first node added
/// with parent = -1 is the root. An empty tree (zero nodes) is valid and
/// represents empty source.
class ParseTree {
public:
    struct Node {
        std::string label;
        int parent = -1;
        std::vector<int> children;
    };

    int add_node(std::string label, int parent = -1);
    size_t size() const { return nodes_.size(); }
    bool empty() const { return nodes_.empty(); }
    const Node& node(int i) const { return nodes_[static_cast<size_t>(i)]; }
    int root() const { return nodes_.empty() ? -1 : 0; }
    const std::vector<Node>& nodes() const { return nodes_; }

private:
    std::vector<Node> nodes_;
};

/// Parses source into a structural tree: statements, nesting (indentation for
/// python, braces otherwise), bracket groups, and token leaves. Identifiers
/// are canonicalized to positional tokens ($0, $1, ...) by first occurrence,
/// keywords preserved, string literals collapsed to "str". A parser is
/// registered for every language tag: "python" gets the indentation grammar,
/// everything else the brace grammar with a shared keyword table.
/// Throws ParseFailure on unbalanced delimiters.
ParseTree parse_code(const std::string& code, const std::string& language);

/// Minimum-cost ordered-tree edit distance with unit insert/delete/relabel
/// costs (keyroot decomposition).
long tree_edit_distance(const ParseTree& a, const ParseTree& b);

struct TreeEditResult {
    long raw = 0;
    double normalized = 0.0;  // raw / max(node count a, node count b); 0 when both empty
};

/// Parses both sources and compares their canonicalized trees.
TreeEditResult ast_edit_distance(const std::string& code_a, const std::string& code_b,
                                 const std::string& language);

}  // namespace alchemist
