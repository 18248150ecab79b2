#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "hiertax/error.hpp"

namespace hiertax {

/// Short node identifier such as "H1a". Nonempty, no whitespace.
class NodeTag {
  public:
    NodeTag() = default;
    explicit NodeTag(std::string value);

    const std::string& str() const { return value_; }

    friend auto operator<=>(const NodeTag&, const NodeTag&) = default;

    static bool is_valid(std::string_view value);

  private:
    std::string value_;
};

/// Dense index of a node inside its taxonomy (declaration order).
using NodeIndex = std::size_t;

struct TaxonomyNode {
    NodeTag tag;
    std::string name;
    std::optional<NodeIndex> parent;
    std::vector<NodeIndex> children;
    int level = 0;
    std::optional<std::int64_t> count;

    bool is_leaf() const { return children.empty(); }

    friend bool operator==(const TaxonomyNode&, const TaxonomyNode&) = default;
};

enum class TaxonomyErrorKind {
    Syntax,
    InvalidTag,
    DuplicateTag,
    UnknownParent,
    Cycle,
    NoRoot,
    MultipleRoots,
    TooFewLeaves,
    CountMismatch,
};

const char* to_string(TaxonomyErrorKind kind);

class TaxonomyError : public ValidationError {
  public:
    TaxonomyError(TaxonomyErrorKind kind, std::size_t line, const std::string& detail);

    TaxonomyErrorKind kind() const { return kind_; }
    /// 1-based line in the source text; 0 when not tied to a line.
    std::size_t line() const { return line_; }

  private:
    TaxonomyErrorKind kind_;
    std::size_t line_;
};

/// Immutable rooted tree of tagged classes.
class Taxonomy {
  public:
    /// Parses the tab-separated taxonomy format:
    ///   tag<TAB>parent<TAB>display name[<TAB>count]
    /// with "-" as the root's parent and '#' comment lines.
    static Taxonomy parse(std::string_view text);
    static Taxonomy load(const std::string& path);

    /// Canonical text form. parse(serialize()) reproduces *this exactly.
    std::string serialize() const;

    std::size_t size() const { return nodes_.size(); }
    const TaxonomyNode& node(NodeIndex i) const { return nodes_.at(i); }
    const std::vector<TaxonomyNode>& nodes() const { return nodes_; }
    NodeIndex root() const { return root_; }
    int max_level() const;

    std::optional<NodeIndex> find(const NodeTag& tag) const;
    std::optional<NodeIndex> find(std::string_view tag) const;
    /// Throws ValidationError for unknown tags.
    NodeIndex index_of(std::string_view tag) const;
    const NodeTag& tag(NodeIndex i) const { return nodes_.at(i).tag; }

    /// Starts at `i`, ends at the root.
    std::vector<NodeIndex> path_to_root(NodeIndex i) const;
    std::vector<NodeTag> path_to_root(const NodeTag& tag) const;

    /// True when `ancestor` lies on path_to_root(node) (a node is its own ancestor).
    bool is_ancestor(NodeIndex ancestor, NodeIndex node) const;

    /// Pre-order walk following declaration order of children.
    std::vector<NodeIndex> depth_first() const;
    std::vector<NodeIndex> leaves() const;
    std::vector<NodeTag> leaf_tags() const;

    /// FNV-1a of the canonical serialization; stored in checkpoints.
    std::uint64_t fingerprint() const;

    /// The 15-node lesion hierarchy with its per-class case totals.
    static Taxonomy pulmonary_radpath();

    friend bool operator==(const Taxonomy&, const Taxonomy&) = default;

  private:
    std::vector<TaxonomyNode> nodes_;
    std::unordered_map<std::string, NodeIndex> by_tag_;
    NodeIndex root_ = 0;
};

/// Softmax classifier over the children of one internal node. When leaky, a
/// virtual fall-back slot follows the real classes.
struct Head {
    NodeIndex parent = 0;
    std::vector<NodeIndex> classes;
    bool leaky = false;

    std::size_t width() const { return classes.size() + (leaky ? 1 : 0); }
    std::size_t leaky_slot() const { return classes.size(); }
    std::optional<std::size_t> slot_of(NodeIndex child) const;

    friend bool operator==(const Head&, const Head&) = default;
};

/// One head per internal node with at least two children, ordered by
/// (level, declaration order).
std::vector<Head> derive_heads(const Taxonomy& t, bool leaky);

/// Display alias for a head: "H1".."H4" when the taxonomy's heads are the
/// lesion hierarchy's (H0, H1a, H1b, H2a), otherwise the parent tag.
std::string head_display_name(const Taxonomy& t, const Head& head);

enum class TargetKind { Class, Leaky, NotApplicable };

struct HeadTarget {
    TargetKind kind = TargetKind::NotApplicable;
    std::size_t slot = 0;  ///< class index, or the leaky slot index

    bool concrete() const { return kind != TargetKind::NotApplicable; }

    friend bool operator==(const HeadTarget&, const HeadTarget&) = default;
};

/// Per-head training target for one sample.
using RoutedLabel = std::vector<HeadTarget>;

/// Throws ValidationError when `leaf` is not a leaf.
RoutedLabel route_label(const Taxonomy& t, const std::vector<Head>& heads, NodeIndex leaf);

} // namespace hiertax

template <>
struct std::hash<hiertax::NodeTag> {
    std::size_t operator()(const hiertax::NodeTag& t) const noexcept {
        return std::hash<std::string>{}(t.str());
    }
};
