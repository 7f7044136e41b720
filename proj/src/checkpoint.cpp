#include "textpainter/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

namespace textpainter {

namespace {

constexpr char kMagic[8] = {'T', 'P', 'C', 'K', 'P', 'T', '0', '1'};

class Writer {
public:
    void raw(const void* p, size_t n) { buf_.append(static_cast<const char*>(p), n); }
    void u64(uint64_t v) { raw(&v, 8); }
    void i64(int64_t v) { raw(&v, 8); }
    void i32(int32_t v) { raw(&v, 4); }
    void str(const std::string& s) {
        u64(s.size());
        raw(s.data(), s.size());
    }
    void floats(const std::vector<float>& v) {
        u64(v.size());
        raw(v.data(), v.size() * sizeof(float));
    }
    const std::string& buffer() const { return buf_; }

private:
    std::string buf_;
};

class Reader {
public:
    explicit Reader(std::string data) : data_(std::move(data)) {}
    void raw(void* p, size_t n) {
        check(pos_ + n <= data_.size(), "ckpt_corrupt", "checkpoint truncated");
        std::memcpy(p, data_.data() + pos_, n);
        pos_ += n;
    }
    uint64_t u64() {
        uint64_t v;
        raw(&v, 8);
        return v;
    }
    int64_t i64() {
        int64_t v;
        raw(&v, 8);
        return v;
    }
    int32_t i32() {
        int32_t v;
        raw(&v, 4);
        return v;
    }
    std::string str() {
        uint64_t n = u64();
        check(pos_ + n <= data_.size(), "ckpt_corrupt", "checkpoint truncated");
        std::string s(data_.data() + pos_, n);
        pos_ += n;
        return s;
    }
    std::vector<float> floats() {
        uint64_t n = u64();
        check(pos_ + n * sizeof(float) <= data_.size(), "ckpt_corrupt", "checkpoint truncated");
        std::vector<float> v(n);
        raw(v.data(), n * sizeof(float));
        return v;
    }
    size_t pos() const { return pos_; }
    const std::string& data() const { return data_; }

private:
    std::string data_;
    size_t pos_ = 0;
};

void write_params(Writer& w, const nn::ParamList& ps, const nn::Adam& opt,
                  const std::string& side) {
    const auto& slots = opt.slots();
    check(opt.params().size() == ps.items().size() && slots.size() == ps.items().size(),
          "ckpt_write", "optimizer does not cover the parameter list");
    w.str(side);
    w.i64(opt.step_count());
    w.u64(ps.items().size());
    for (size_t i = 0; i < ps.items().size(); ++i) {
        const auto& p = ps.items()[i];
        w.str(p.name);
        const auto& shape = p.var.shape();
        w.i32(static_cast<int32_t>(shape.size()));
        for (int d : shape) w.i32(d);
        w.floats(p.var.values());
        w.floats(slots[i].m);
        w.floats(slots[i].v);
    }
}

void read_params(Reader& r, nn::ParamList& ps, nn::Adam& opt, const std::string& side) {
    check(r.str() == side, "ckpt_corrupt", "parameter section out of order");
    opt.set_step_count(r.i64());
    uint64_t n = r.u64();
    check(n == ps.items().size(), "ckpt_mismatch", "parameter count differs from the model");
    auto& slots = opt.slots();
    check(slots.size() == n, "ckpt_mismatch", "optimizer slot count differs");
    for (uint64_t i = 0; i < n; ++i) {
        const auto& p = ps.items()[i];
        std::string name = r.str();
        check(name == p.name, "ckpt_mismatch",
              "parameter order mismatch: " + name + " vs " + p.name);
        int32_t nd = r.i32();
        nn::Shape shape;
        for (int32_t d = 0; d < nd; ++d) shape.push_back(r.i32());
        check(shape == p.var.shape(), "ckpt_mismatch", "shape mismatch for " + name);
        std::vector<float> vals = r.floats();
        std::vector<float> m = r.floats();
        std::vector<float> v = r.floats();
        check(vals.size() == p.var.values().size(), "ckpt_corrupt", "tensor size mismatch");
        check(m.size() == vals.size() && v.size() == vals.size(), "ckpt_corrupt",
              "slot size mismatch");
        nn::Var var = p.var;
        var.values_mut() = std::move(vals);
        slots[i].m = std::move(m);
        slots[i].v = std::move(v);
    }
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    check(in.good(), "ckpt_open", "cannot open checkpoint: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

Reader open_verified(const std::string& path) {
    std::string data = read_file(path);
    check(data.size() >= sizeof(kMagic) + 8, "ckpt_corrupt", "checkpoint too small");
    check(std::memcmp(data.data(), kMagic, sizeof(kMagic)) == 0, "ckpt_corrupt",
          "bad checkpoint magic");
    uint64_t stored;
    std::memcpy(&stored, data.data() + data.size() - 8, 8);
    uint64_t actual = fnv1a64(data.data(), data.size() - 8);
    check(stored == actual, "ckpt_corrupt", "checkpoint checksum mismatch");
    Reader r(data.substr(sizeof(kMagic), data.size() - sizeof(kMagic) - 8));
    return r;
}

}  // namespace

using nn::Var;

void save_checkpoint(const std::string& path, const TextPainterModel& model,
                     const nn::Adam& opt_g, const nn::Adam& opt_d, const TrainState& state) {
    Writer w;
    w.str(model.config().to_config().canonical());
    w.i64(state.epoch);
    w.i64(state.step);
    w.str(state.rng.serialize());
    write_params(w, model.g_params(), opt_g, "G");
    write_params(w, model.d_params(), opt_d, "D");

    std::string blob;
    blob.append(kMagic, sizeof(kMagic));
    blob += w.buffer();
    uint64_t sum = fnv1a64(blob.data(), blob.size());
    blob.append(reinterpret_cast<const char*>(&sum), 8);

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    check(out.good(), "ckpt_open", "cannot write checkpoint: " + path);
    out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
    check(out.good(), "ckpt_write", "short write on checkpoint: " + path);
}

void load_checkpoint(const std::string& path, TextPainterModel& model, nn::Adam& opt_g,
                     nn::Adam& opt_d, TrainState& state) {
    Reader r = open_verified(path);
    std::string cfg_text = r.str();
    std::string want = model.config().to_config().canonical();
    check(cfg_text == want, "ckpt_mismatch",
          "checkpoint config does not match the constructed model");
    state.epoch = static_cast<int>(r.i64());
    state.step = r.i64();
    state.rng.deserialize(r.str());
    read_params(r, model.g_params(), opt_g, "G");
    read_params(r, model.d_params(), opt_d, "D");
    check(r.pos() == r.data().size(), "ckpt_corrupt", "trailing bytes in checkpoint");
}

KVConfig read_checkpoint_config(const std::string& path) {
    Reader r = open_verified(path);
    return KVConfig::from_string(r.str());
}

}  // namespace textpainter
