#include "hiertax/taxonomy.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

#include "hiertax/rng.hpp"

namespace hiertax {

namespace {

constexpr std::string_view kPulmonaryRadPath =
    "H0\t-\tALL\t5134\n"
    "H1a\tH0\tCancer\t4163\n"
    "H2a\tH1a\tAdenocarcinoma\t3805\n"
    "H4a\tH2a\tInvasive\t2088\n"
    "H4b\tH2a\tNon-invasive\t1717\n"
    "H2b\tH1a\tSquamous carcinoma\t239\n"
    "H2c\tH1a\tLarge cell carcinoma\t47\n"
    "H2d\tH1a\tSmall cell carcinoma\t20\n"
    "H2e\tH1a\tMucinous adenocarcinoma\t52\n"
    "H1b\tH0\tNon-Cancer\t405\n"
    "H3a\tH1b\tTuberculosis\t153\n"
    "H3b\tH1b\tHamartoma\t82\n"
    "H3c\tH1b\tProliferation of fibrous tissue\t133\n"
    "H3d\tH1b\tCryptococcus\t37\n"
    "H1c\tH0\tOthers\t566\n";

struct RawEntry {
    std::string tag;
    std::string parent;
    std::string name;
    std::optional<std::int64_t> count;
    std::size_t line = 0;
};

std::vector<std::string> split_tabs(std::string_view line) {
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find('\t', start);
        if (pos == std::string_view::npos) {
            fields.emplace_back(line.substr(start));
            break;
        }
        fields.emplace_back(line.substr(start, pos - start));
        start = pos + 1;
    }
    return fields;
}

bool is_blank(std::string_view s) {
    return std::all_of(s.begin(), s.end(), [](char c) { return c == ' ' || c == '\t'; });
}

} // namespace

NodeTag::NodeTag(std::string value) : value_(std::move(value)) {
    if (!is_valid(value_)) {
        throw ValidationError("invalid node tag '" + value_ + "'");
    }
}

bool NodeTag::is_valid(std::string_view value) {
    if (value.empty()) {
        return false;
    }
    return std::none_of(value.begin(), value.end(), [](unsigned char c) {
        return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f';
    });
}

const char* to_string(TaxonomyErrorKind kind) {
    switch (kind) {
    case TaxonomyErrorKind::Syntax: return "syntax error";
    case TaxonomyErrorKind::InvalidTag: return "invalid tag";
    case TaxonomyErrorKind::DuplicateTag: return "duplicate tag";
    case TaxonomyErrorKind::UnknownParent: return "unknown parent";
    case TaxonomyErrorKind::Cycle: return "cycle";
    case TaxonomyErrorKind::NoRoot: return "no root";
    case TaxonomyErrorKind::MultipleRoots: return "multiple roots";
    case TaxonomyErrorKind::TooFewLeaves: return "fewer than 2 leaves";
    case TaxonomyErrorKind::CountMismatch: return "count mismatch";
    }
    return "unknown";
}

TaxonomyError::TaxonomyError(TaxonomyErrorKind kind, std::size_t line, const std::string& detail)
    : ValidationError("taxonomy " + std::string(to_string(kind)) +
                      (line > 0 ? " at line " + std::to_string(line) : std::string()) + ": " +
                      detail),
      kind_(kind), line_(line) {}

Taxonomy Taxonomy::parse(std::string_view text) {
    std::vector<RawEntry> entries;
    std::size_t line_no = 0;
    std::size_t start = 0;
    while (start <= text.size()) {
        auto end = text.find('\n', start);
        if (end == std::string_view::npos) {
            end = text.size();
        }
        std::string_view line = text.substr(start, end - start);
        ++line_no;
        start = end + 1;
        if (!line.empty() && line.back() == '\r') {
            line.remove_suffix(1);
        }
        if (is_blank(line) || line.front() == '#') {
            if (end == text.size()) {
                break;
            }
            continue;
        }
        auto fields = split_tabs(line);
        if (fields.size() != 3 && fields.size() != 4) {
            throw TaxonomyError(TaxonomyErrorKind::Syntax, line_no,
                                "expected 3 or 4 tab-separated fields, got " +
                                    std::to_string(fields.size()));
        }
        RawEntry e;
        e.line = line_no;
        e.tag = fields[0];
        e.parent = fields[1];
        e.name = fields[2];
        if (!NodeTag::is_valid(e.tag)) {
            throw TaxonomyError(TaxonomyErrorKind::InvalidTag, line_no, "'" + e.tag + "'");
        }
        if (e.parent != "-" && !NodeTag::is_valid(e.parent)) {
            throw TaxonomyError(TaxonomyErrorKind::InvalidTag, line_no,
                                "parent '" + e.parent + "'");
        }
        if (fields.size() == 4) {
            const auto& c = fields[3];
            std::int64_t value = 0;
            const auto [ptr, ec] = std::from_chars(c.data(), c.data() + c.size(), value);
            if (ec != std::errc() || ptr != c.data() + c.size() || value < 0) {
                throw TaxonomyError(TaxonomyErrorKind::Syntax, line_no,
                                    "count '" + c + "' is not a nonnegative integer");
            }
            e.count = value;
        }
        entries.push_back(std::move(e));
        if (end == text.size()) {
            break;
        }
    }

    Taxonomy t;
    for (std::size_t i = 0; i < entries.size(); ++i) {
        const auto [it, inserted] = t.by_tag_.emplace(entries[i].tag, i);
        if (!inserted) {
            throw TaxonomyError(TaxonomyErrorKind::DuplicateTag, entries[i].line,
                                "'" + entries[i].tag + "' first declared at line " +
                                    std::to_string(entries[it->second].line));
        }
    }

    std::vector<std::optional<NodeIndex>> parent(entries.size());
    for (std::size_t i = 0; i < entries.size(); ++i) {
        if (entries[i].parent == "-") {
            continue;
        }
        const auto it = t.by_tag_.find(entries[i].parent);
        if (it == t.by_tag_.end()) {
            throw TaxonomyError(TaxonomyErrorKind::UnknownParent, entries[i].line,
                                "'" + entries[i].parent + "' of '" + entries[i].tag + "'");
        }
        parent[i] = it->second;
    }

    // 0 = unvisited, 1 = on the current chain, 2 = known to terminate.
    std::vector<int> state(entries.size(), 0);
    for (std::size_t i = 0; i < entries.size(); ++i) {
        std::vector<NodeIndex> chain;
        std::optional<NodeIndex> cur = i;
        while (cur && state[*cur] == 0) {
            state[*cur] = 1;
            chain.push_back(*cur);
            cur = parent[*cur];
        }
        if (cur && state[*cur] == 1) {
            throw TaxonomyError(TaxonomyErrorKind::Cycle, entries[*cur].line,
                                "'" + entries[*cur].tag + "' is its own ancestor");
        }
        for (auto n : chain) {
            state[n] = 2;
        }
    }

    std::optional<NodeIndex> root;
    for (std::size_t i = 0; i < entries.size(); ++i) {
        if (!parent[i]) {
            if (root) {
                throw TaxonomyError(TaxonomyErrorKind::MultipleRoots, entries[i].line,
                                    "'" + entries[i].tag + "' and '" + entries[*root].tag + "'");
            }
            root = i;
        }
    }
    if (!root) {
        throw TaxonomyError(TaxonomyErrorKind::NoRoot, 0, "no line has parent '-'");
    }
    t.root_ = *root;

    t.nodes_.resize(entries.size());
    for (std::size_t i = 0; i < entries.size(); ++i) {
        auto& n = t.nodes_[i];
        n.tag = NodeTag(entries[i].tag);
        n.name = entries[i].name;
        n.parent = parent[i];
        n.count = entries[i].count;
        if (parent[i]) {
            t.nodes_[*parent[i]].children.push_back(i);
        }
    }
    for (auto i : t.depth_first()) {
        auto& n = t.nodes_[i];
        n.level = n.parent ? t.nodes_[*n.parent].level + 1 : 0;
    }

    const auto leaf_count = static_cast<std::size_t>(std::count_if(
        t.nodes_.begin(), t.nodes_.end(), [](const TaxonomyNode& n) { return n.is_leaf(); }));
    if (leaf_count < 2) {
        throw TaxonomyError(TaxonomyErrorKind::TooFewLeaves, 0,
                            "found " + std::to_string(leaf_count) + " leaf");
    }

    for (std::size_t i = 0; i < entries.size(); ++i) {
        const auto& n = t.nodes_[i];
        if (n.is_leaf() || !n.count) {
            continue;
        }
        std::int64_t sum = 0;
        bool complete = true;
        for (auto c : n.children) {
            if (!t.nodes_[c].count) {
                complete = false;
                break;
            }
            sum += *t.nodes_[c].count;
        }
        if (complete && sum != *n.count) {
            throw TaxonomyError(TaxonomyErrorKind::CountMismatch, entries[i].line,
                                "'" + n.tag.str() + "' has count " + std::to_string(*n.count) +
                                    " but its children sum to " + std::to_string(sum));
        }
    }
    return t;
}

Taxonomy Taxonomy::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw ValidationError("cannot open taxonomy file '" + path + "'");
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse(ss.str());
}

std::string Taxonomy::serialize() const {
    std::string out;
    for (const auto& n : nodes_) {
        out += n.tag.str();
        out += '\t';
        out += n.parent ? nodes_[*n.parent].tag.str() : std::string("-");
        out += '\t';
        out += n.name;
        if (n.count) {
            out += '\t';
            out += std::to_string(*n.count);
        }
        out += '\n';
    }
    return out;
}

int Taxonomy::max_level() const {
    int m = 0;
    for (const auto& n : nodes_) {
        m = std::max(m, n.level);
    }
    return m;
}

std::optional<NodeIndex> Taxonomy::find(const NodeTag& tag) const {
    return find(std::string_view(tag.str()));
}

std::optional<NodeIndex> Taxonomy::find(std::string_view tag) const {
    const auto it = by_tag_.find(std::string(tag));
    if (it == by_tag_.end()) {
        return std::nullopt;
    }
    return it->second;
}

NodeIndex Taxonomy::index_of(std::string_view tag) const {
    if (auto i = find(tag)) {
        return *i;
    }
    throw ValidationError("unknown node tag '" + std::string(tag) + "'");
}

std::vector<NodeIndex> Taxonomy::path_to_root(NodeIndex i) const {
    std::vector<NodeIndex> path{i};
    while (nodes_.at(path.back()).parent) {
        path.push_back(*nodes_[path.back()].parent);
    }
    return path;
}

std::vector<NodeTag> Taxonomy::path_to_root(const NodeTag& tag) const {
    std::vector<NodeTag> out;
    for (auto i : path_to_root(index_of(tag.str()))) {
        out.push_back(nodes_[i].tag);
    }
    return out;
}

bool Taxonomy::is_ancestor(NodeIndex ancestor, NodeIndex node) const {
    std::optional<NodeIndex> cur = node;
    while (cur) {
        if (*cur == ancestor) {
            return true;
        }
        cur = nodes_.at(*cur).parent;
    }
    return false;
}

std::vector<NodeIndex> Taxonomy::depth_first() const {
    std::vector<NodeIndex> order;
    order.reserve(nodes_.size());
    std::vector<NodeIndex> stack{root_};
    while (!stack.empty()) {
        const auto i = stack.back();
        stack.pop_back();
        order.push_back(i);
        const auto& ch = nodes_[i].children;
        for (auto it = ch.rbegin(); it != ch.rend(); ++it) {
            stack.push_back(*it);
        }
    }
    return order;
}

std::vector<NodeIndex> Taxonomy::leaves() const {
    std::vector<NodeIndex> out;
    for (auto i : depth_first()) {
        if (nodes_[i].is_leaf()) {
            out.push_back(i);
        }
    }
    return out;
}

std::vector<NodeTag> Taxonomy::leaf_tags() const {
    std::vector<NodeTag> out;
    for (auto i : leaves()) {
        out.push_back(nodes_[i].tag);
    }
    return out;
}

std::uint64_t Taxonomy::fingerprint() const {
    return fnv1a64(serialize());
}

Taxonomy Taxonomy::pulmonary_radpath() {
    return parse(kPulmonaryRadPath);
}

std::optional<std::size_t> Head::slot_of(NodeIndex child) const {
    const auto it = std::find(classes.begin(), classes.end(), child);
    if (it == classes.end()) {
        return std::nullopt;
    }
    return static_cast<std::size_t>(it - classes.begin());
}

std::vector<Head> derive_heads(const Taxonomy& t, bool leaky) {
    std::vector<NodeIndex> owners;
    for (NodeIndex i = 0; i < t.size(); ++i) {
        if (t.node(i).children.size() >= 2) {
            owners.push_back(i);
        }
    }
    std::stable_sort(owners.begin(), owners.end(), [&](NodeIndex a, NodeIndex b) {
        return t.node(a).level < t.node(b).level;
    });
    std::vector<Head> heads;
    heads.reserve(owners.size());
    for (auto o : owners) {
        heads.push_back(Head{o, t.node(o).children, leaky});
    }
    return heads;
}

std::string head_display_name(const Taxonomy& t, const Head& head) {
    static const std::vector<std::string> kLesionOwners{"H0", "H1a", "H1b", "H2a"};
    const auto heads = derive_heads(t, false);
    if (heads.size() == kLesionOwners.size()) {
        bool lesion = true;
        for (std::size_t i = 0; i < heads.size(); ++i) {
            lesion = lesion && t.tag(heads[i].parent).str() == kLesionOwners[i];
        }
        if (lesion) {
            for (std::size_t i = 0; i < heads.size(); ++i) {
                if (heads[i].parent == head.parent) {
                    return "H" + std::to_string(i + 1);
                }
            }
        }
    }
    return t.tag(head.parent).str();
}

RoutedLabel route_label(const Taxonomy& t, const std::vector<Head>& heads, NodeIndex leaf) {
    if (leaf >= t.size() || !t.node(leaf).is_leaf()) {
        throw ValidationError("route_label: '" +
                              (leaf < t.size() ? t.tag(leaf).str() : std::to_string(leaf)) +
                              "' is not a leaf");
    }
    const auto path = t.path_to_root(leaf);
    RoutedLabel routed(heads.size());
    for (std::size_t h = 0; h < heads.size(); ++h) {
        const auto& head = heads[h];
        // The path child of head.parent is the path element just before it.
        const auto it = std::find(path.begin(), path.end(), head.parent);
        if (it != path.end() && it != path.begin()) {
            routed[h] = HeadTarget{TargetKind::Class, *head.slot_of(*(it - 1))};
        } else if (head.leaky) {
            routed[h] = HeadTarget{TargetKind::Leaky, head.leaky_slot()};
        } else {
            routed[h] = HeadTarget{TargetKind::NotApplicable, 0};
        }
    }
    return routed;
}

} // namespace hiertax
