#include "hiertax/checkpoint.hpp"

#include <bit>
#include <fstream>
#include <sstream>

namespace hiertax {

namespace {

constexpr std::string_view kMagic = "HTXM";

class Writer {
  public:
    void u8(std::uint8_t v) { out_.push_back(static_cast<char>(v)); }
    void u32(std::uint32_t v) { put(v, 4); }
    void u64(std::uint64_t v) { put(v, 8); }
    void f64(double v) { put(std::bit_cast<std::uint64_t>(v), 8); }
    void bytes(std::string_view s) { out_.append(s); }
    std::string take() { return std::move(out_); }

  private:
    void put(std::uint64_t v, int n) {
        for (int i = 0; i < n; ++i) {
            out_.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
        }
    }
    std::string out_;
};

class Reader {
  public:
    explicit Reader(std::string_view in) : in_(in) {}

    std::uint8_t u8() { return static_cast<std::uint8_t>(get(1)); }
    std::uint32_t u32() { return static_cast<std::uint32_t>(get(4)); }
    std::uint64_t u64() { return get(8); }
    double f64() { return std::bit_cast<double>(get(8)); }
    std::string_view bytes(std::size_t n) {
        need(n);
        auto s = in_.substr(pos_, n);
        pos_ += n;
        return s;
    }
    bool done() const { return pos_ == in_.size(); }

  private:
    void need(std::size_t n) const {
        if (in_.size() - pos_ < n) {
            throw ValidationError("checkpoint is truncated");
        }
    }
    std::uint64_t get(int n) {
        need(static_cast<std::size_t>(n));
        std::uint64_t v = 0;
        for (int i = 0; i < n; ++i) {
            v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in_[pos_ + static_cast<std::size_t>(i)]))
                 << (8 * i);
        }
        pos_ += static_cast<std::size_t>(n);
        return v;
    }
    std::string_view in_;
    std::size_t pos_ = 0;
};

} // namespace

std::string encode_checkpoint(const Model& m) {
    Writer w;
    w.bytes(kMagic);
    w.u32(kCheckpointVersion);
    w.u64(m.taxonomy().fingerprint());
    w.u8(static_cast<std::uint8_t>(m.kind()));
    w.u32(static_cast<std::uint32_t>(m.input_dim()));
    const auto& cfg = m.config();
    w.u8(cfg.backbone.dense ? 1 : 0);
    w.u32(static_cast<std::uint32_t>(cfg.backbone.widths.size()));
    for (auto width : cfg.backbone.widths) {
        w.u32(static_cast<std::uint32_t>(width));
    }
    w.u32(static_cast<std::uint32_t>(cfg.hidden));
    w.u8(static_cast<std::uint8_t>(cfg.feed));
    w.u64(cfg.seed);
    const auto params = m.parameters();
    w.u32(static_cast<std::uint32_t>(params.size()));
    for (const auto* p : params) {
        w.u32(static_cast<std::uint32_t>(p->name.size()));
        w.bytes(p->name);
        w.u32(static_cast<std::uint32_t>(p->value.rows()));
        w.u32(static_cast<std::uint32_t>(p->value.cols()));
        for (double v : p->value.values()) {
            w.f64(v);
        }
    }
    return w.take();
}

Model decode_checkpoint(std::string_view bytes, std::shared_ptr<const Taxonomy> t) {
    Reader r(bytes);
    if (r.bytes(kMagic.size()) != kMagic) {
        throw ValidationError("not a model checkpoint (bad magic)");
    }
    const auto version = r.u32();
    if (version != kCheckpointVersion) {
        throw ValidationError("unsupported checkpoint version " + std::to_string(version));
    }
    if (r.u64() != t->fingerprint()) {
        throw ValidationError("checkpoint was trained on a different taxonomy");
    }
    const auto kind_raw = r.u8();
    if (kind_raw > static_cast<std::uint8_t>(StrategyKind::LeakyDense)) {
        throw ValidationError("checkpoint has an unknown strategy kind");
    }
    const auto input_dim = r.u32();
    ModelConfig cfg;
    cfg.backbone.dense = r.u8() != 0;
    const auto n_widths = r.u32();
    cfg.backbone.widths.clear();
    for (std::uint32_t i = 0; i < n_widths; ++i) {
        cfg.backbone.widths.push_back(r.u32());
    }
    cfg.hidden = r.u32();
    const auto feed_raw = r.u8();
    if (feed_raw > static_cast<std::uint8_t>(DenseFeed::Logits)) {
        throw ValidationError("checkpoint has an unknown dense feed");
    }
    cfg.feed = static_cast<DenseFeed>(feed_raw);
    cfg.seed = r.u64();
    Model m(std::move(t), static_cast<StrategyKind>(kind_raw), input_dim, cfg);
    auto params = m.parameters();
    if (r.u32() != params.size()) {
        throw ValidationError("checkpoint parameter count does not match its architecture");
    }
    for (auto* p : params) {
        const auto name = r.bytes(r.u32());
        const auto rows = r.u32();
        const auto cols = r.u32();
        if (name != p->name || rows != p->value.rows() || cols != p->value.cols()) {
            throw ValidationError("checkpoint parameter '" + std::string(name) + "' does not match '" +
                                  p->name + "'");
        }
        for (auto& v : p->value.values()) {
            v = r.f64();
        }
    }
    if (!r.done()) {
        throw ValidationError("checkpoint has trailing bytes");
    }
    m.zero_grad();
    return m;
}

void save_checkpoint(const std::string& path, const Model& m) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw std::runtime_error("cannot write checkpoint '" + path + "'");
    }
    const auto bytes = encode_checkpoint(m);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

Model load_checkpoint(const std::string& path, std::shared_ptr<const Taxonomy> t) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw ValidationError("cannot open checkpoint '" + path + "'");
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return decode_checkpoint(ss.str(), std::move(t));
}

} // namespace hiertax
