#include "tprs/checkpoint.hpp"

#include <cstring>
#include <stdexcept>

#include "tprs/config.hpp"
#include "tprs/fsio.hpp"

namespace tprs {

namespace {

constexpr char kMagic[4] = {'T', 'P', 'R', 'S'};
constexpr uint32_t kVersion = 1;

void put_u32(std::string& out, uint32_t v) {
  out.append(reinterpret_cast<const char*>(&v), 4);
}
void put_u64(std::string& out, uint64_t v) {
  out.append(reinterpret_cast<const char*>(&v), 8);
}
void put_f64(std::string& out, double v) {
  out.append(reinterpret_cast<const char*>(&v), 8);
}

class Reader {
 public:
  Reader(const std::string& bytes, const std::string& path)
      : bytes_(bytes), path_(path) {}

  const char* take(size_t n) {
    if (off_ + n > bytes_.size()) {
      throw std::runtime_error("checkpoint truncated: " + path_);
    }
    const char* p = bytes_.data() + off_;
    off_ += n;
    return p;
  }
  uint32_t u32() {
    uint32_t v;
    std::memcpy(&v, take(4), 4);
    return v;
  }
  uint64_t u64() {
    uint64_t v;
    std::memcpy(&v, take(8), 8);
    return v;
  }
  double f64() {
    double v;
    std::memcpy(&v, take(8), 8);
    return v;
  }
  std::string str(size_t n) { return std::string(take(n), n); }
  size_t offset() const { return off_; }
  size_t remaining() const { return bytes_.size() - off_; }

 private:
  const std::string& bytes_;
  std::string path_;
  size_t off_ = 0;
};

std::string serialize(Model& model, const AdamState& optim, const Rng& rng,
                      double best_val_loss) {
  std::string out(kMagic, 4);
  put_u32(out, kVersion);
  put_u64(out, model.config().hash());
  const std::string cfg_json = model_config_to_json(model.config());
  put_u32(out, static_cast<uint32_t>(cfg_json.size()));
  out += cfg_json;

  auto named = model.named_parameters();
  put_u32(out, static_cast<uint32_t>(named.size()));
  for (auto& [name, t] : named) {
    put_u32(out, static_cast<uint32_t>(name.size()));
    out += name;
    put_u32(out, static_cast<uint32_t>(t->shape().size()));
    for (int d : t->shape()) put_u32(out, static_cast<uint32_t>(d));
    out.append(reinterpret_cast<const char*>(t->data().data()),
               t->data().size() * sizeof(double));
  }

  const bool has_optim = !optim.m.empty();
  out.push_back(has_optim ? 1 : 0);
  if (has_optim) {
    if (optim.m.size() != named.size()) {
      throw std::invalid_argument("checkpoint: optimizer state does not match parameters");
    }
    put_u64(out, static_cast<uint64_t>(optim.step_count));
    for (size_t i = 0; i < named.size(); ++i) {
      out.append(reinterpret_cast<const char*>(optim.m[i].data()),
                 optim.m[i].size() * sizeof(double));
      out.append(reinterpret_cast<const char*>(optim.v[i].data()),
                 optim.v[i].size() * sizeof(double));
    }
  }

  for (uint64_t w : rng.state()) put_u64(out, w);
  put_f64(out, best_val_loss);
  put_u64(out, fnv1a64(std::string_view(out.data(), out.size())));
  return out;
}

}  // namespace

void save_checkpoint(const std::string& path, Model& model,
                     const AdamState& optim, const Rng& rng,
                     double best_val_loss) {
  atomic_write_bytes(path, serialize(model, optim, rng, best_val_loss));
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  const std::string bytes = read_bytes(path);
  if (bytes.size() < 8) throw std::runtime_error("checkpoint truncated: " + path);

  // integrity first: trailing hash over the full payload
  uint64_t stored_hash;
  std::memcpy(&stored_hash, bytes.data() + bytes.size() - 8, 8);
  if (fnv1a64(std::string_view(bytes.data(), bytes.size() - 8)) != stored_hash) {
    throw std::runtime_error("checkpoint corrupt (payload hash mismatch): " + path);
  }

  Reader r(bytes, path);
  if (std::memcmp(r.take(4), kMagic, 4) != 0) {
    throw std::runtime_error("not a TPRS checkpoint: " + path);
  }
  const uint32_t version = r.u32();
  if (version != kVersion) {
    throw std::runtime_error("unsupported checkpoint version " +
                             std::to_string(version) + ": " + path);
  }
  const uint64_t cfg_hash = r.u64();
  const uint32_t cfg_len = r.u32();
  const std::string cfg_json = r.str(cfg_len);
  ModelConfig cfg = model_config_from_json_text(cfg_json);
  if (cfg.hash() != cfg_hash) {
    throw std::runtime_error("checkpoint config hash mismatch: " + path);
  }

  LoadedCheckpoint out{Model(cfg, 0), AdamState{}, Rng(0), 0.0};
  auto named = out.model.named_parameters();
  const uint32_t ntensors = r.u32();
  if (ntensors != named.size()) {
    throw std::runtime_error("checkpoint parameter count mismatch: " + path);
  }
  for (auto& [name, t] : named) {
    const uint32_t name_len = r.u32();
    if (r.str(name_len) != name) {
      throw std::runtime_error("checkpoint parameter order mismatch at '" +
                               name + "': " + path);
    }
    const uint32_t rank = r.u32();
    Shape shape;
    for (uint32_t d = 0; d < rank; ++d) shape.push_back(static_cast<int>(r.u32()));
    if (shape != t->shape()) {
      throw std::runtime_error("checkpoint shape mismatch at '" + name + "': " + path);
    }
    const size_t n = t->data().size();
    std::memcpy(t->data().data(), r.take(n * sizeof(double)), n * sizeof(double));
  }

  const bool has_optim = *r.take(1) != 0;
  if (has_optim) {
    out.optim.step_count = static_cast<int64_t>(r.u64());
    for (auto& [name, t] : named) {
      const size_t n = t->data().size();
      std::vector<double> m(n), v(n);
      std::memcpy(m.data(), r.take(n * sizeof(double)), n * sizeof(double));
      std::memcpy(v.data(), r.take(n * sizeof(double)), n * sizeof(double));
      out.optim.m.push_back(std::move(m));
      out.optim.v.push_back(std::move(v));
    }
  }

  std::array<uint64_t, 4> rng_state;
  for (auto& w : rng_state) w = r.u64();
  out.rng.set_state(rng_state);
  out.best_val_loss = r.f64();
  if (r.remaining() != 8) {  // only the trailing hash may remain
    throw std::runtime_error("checkpoint has trailing bytes: " + path);
  }
  return out;
}

void load_checkpoint_into(const std::string& path, Model& model) {
  LoadedCheckpoint loaded = load_checkpoint(path);
  if (loaded.model.config().hash() != model.config().hash()) {
    throw std::runtime_error(
        "checkpoint was written for a different model configuration: " + path);
  }
  auto src = loaded.model.named_parameters();
  auto dst = model.named_parameters();
  for (size_t i = 0; i < src.size(); ++i) {
    dst[i].second->data() = src[i].second->data();
  }
}

}  // namespace tprs
