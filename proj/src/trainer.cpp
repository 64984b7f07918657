#include "blurvid/trainer.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>

#include "blurvid/ops.hpp"

namespace blurvid {

namespace fs = std::filesystem;

// ---- Adam -------------------------------------------------------------------

void adam_step(ParamMap<float>& params, const std::map<std::string, Tensor>& grads, AdamMoments& moments,
               std::uint64_t step, double lr, const AdamOptions& opt) {
  if (step == 0) throw Error("adam_step: step count is 1-based");
  if (!(lr >= 0)) throw Error("adam_step: learning rate must be >= 0");
  for (const auto& [name, g] : grads) {
    for (float e : g.values()) {
      if (!std::isfinite(e)) throw Error("non-finite gradient for parameter '" + name + "'");
    }
  }
  const double c1 = 1.0 - std::pow(opt.beta1, static_cast<double>(step));
  const double c2 = 1.0 - std::pow(opt.beta2, static_cast<double>(step));
  for (const auto& [name, g] : grads) {
    const Tensor& w = param(params, name);
    if (g.shape() != w.shape()) {
      throw ShapeError("adam_step: gradient for '" + name + "' has shape " + to_string(g.shape()) + ", parameter " +
                       to_string(w.shape()));
    }
    const auto n = static_cast<std::size_t>(w.size());
    auto mit = moments.m.find(name);
    auto vit = moments.v.find(name);
    std::vector<float> m = mit != moments.m.end() ? mit->second.values() : std::vector<float>(n, 0.0f);
    std::vector<float> v = vit != moments.v.end() ? vit->second.values() : std::vector<float>(n, 0.0f);
    std::vector<float> nw(w.values());
    const auto& gv = g.values();
    for (std::size_t i = 0; i < n; ++i) {
      const double mi = opt.beta1 * m[i] + (1 - opt.beta1) * gv[i];
      const double vi = opt.beta2 * v[i] + (1 - opt.beta2) * static_cast<double>(gv[i]) * gv[i];
      m[i] = static_cast<float>(mi);
      v[i] = static_cast<float>(vi);
      if (lr != 0) nw[i] = static_cast<float>(nw[i] - lr * (mi / c1) / (std::sqrt(vi / c2) + opt.eps));
    }
    moments.m[name] = Tensor(w.shape(), std::move(m));
    moments.v[name] = Tensor(w.shape(), std::move(v));
    if (lr != 0) params[name] = Tensor(w.shape(), std::move(nw));
  }
}

double clip_global_norm(std::map<std::string, Tensor>& grads, double max_norm) {
  double sq = 0;
  for (const auto& [_, g] : grads)
    for (float e : g.values()) sq += static_cast<double>(e) * e;
  const double norm = std::sqrt(sq);
  if (max_norm > 0 && norm > max_norm) {
    const double k = max_norm / norm;
    for (auto& [_, g] : grads) {
      std::vector<float> v(g.values());
      for (auto& e : v) e = static_cast<float>(e * k);
      g = Tensor(g.shape(), std::move(v));
    }
  }
  return norm;
}

// ---- checkpoint bytes -------------------------------------------------------

namespace {

constexpr char kMagic[4] = {'B', 'A', 'M', 'V'};

class Writer {
 public:
  template <typename U>
  void put(U v) {
    static_assert(std::is_integral_v<U>);
    for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<std::uint8_t>(static_cast<std::uint64_t>(v) >> (8 * i)));
  }
  void put_f32(float f) { put(std::bit_cast<std::uint32_t>(f)); }
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out.insert(out.end(), b, b + n);
  }
  std::vector<std::uint8_t> out;
};

class Reader {
 public:
  Reader(const std::vector<std::uint8_t>& b, const std::string& origin) : buf(b), origin(origin) {}
  void need(std::size_t n, const char* what) const {
    if (buf.size() - pos < n) {
      throw TruncatedError("checkpoint '" + origin + "' is truncated (reading " + what + " at byte " +
                           std::to_string(pos) + " of " + std::to_string(buf.size()) + ")");
    }
  }
  template <typename U>
  U get(const char* what) {
    need(sizeof(U), what);
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<std::uint64_t>(buf[pos + i]) << (8 * i);
    pos += sizeof(U);
    return static_cast<U>(v);
  }
  std::string str(std::size_t n) {
    need(n, "entry name");
    std::string s(reinterpret_cast<const char*>(buf.data() + pos), n);
    pos += n;
    return s;
  }
  const std::vector<std::uint8_t>& buf;
  std::string origin;
  std::size_t pos = 0;
};

}  // namespace

std::vector<std::uint8_t> serialize(const Checkpoint& ck) {
  Writer w;
  w.bytes(kMagic, 4);
  w.put<std::uint32_t>(kCheckpointVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(ck.entries.size()));
  for (const auto& [name, t] : ck.entries) {
    if (name.size() > 0xFFFF) throw CheckpointError("checkpoint entry name too long: " + name);
    if (t.rank() > 255) throw CheckpointError("checkpoint entry '" + name + "' has too many dimensions");
    w.put<std::uint16_t>(static_cast<std::uint16_t>(name.size()));
    w.bytes(name.data(), name.size());
    w.put<std::uint8_t>(static_cast<std::uint8_t>(t.rank()));
    for (int d : t.shape()) w.put<std::uint32_t>(static_cast<std::uint32_t>(d));
    for (float f : t.values()) w.put_f32(f);
  }
  w.put<std::uint64_t>(ck.iteration);
  w.put<std::uint64_t>(ck.seed);
  return std::move(w.out);
}

Checkpoint deserialize(const std::vector<std::uint8_t>& bytes, const std::string& origin) {
  Reader r(bytes, origin);
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw BadMagicError("'" + origin + "' is not a checkpoint (bad magic)");
  }
  r.pos = 4;
  const auto version = r.get<std::uint32_t>("version");
  if (version != kCheckpointVersion) {
    throw VersionError("checkpoint '" + origin + "' has unknown format version " + std::to_string(version) +
                       " (expected " + std::to_string(kCheckpointVersion) + ")");
  }
  const auto count = r.get<std::uint32_t>("entry count");
  Checkpoint ck;
  for (std::uint32_t e = 0; e < count; ++e) {
    const auto len = r.get<std::uint16_t>("entry name length");
    std::string name = r.str(len);
    const auto rank = r.get<std::uint8_t>("entry rank");
    Shape shape;
    std::size_t n = 1;
    for (int d = 0; d < rank; ++d) {
      const auto ext = r.get<std::uint32_t>("entry shape");
      shape.push_back(static_cast<int>(ext));
      n *= ext;
    }
    r.need(n * 4, "entry payload");
    std::vector<float> v(n);
    for (auto& f : v) f = std::bit_cast<float>(r.get<std::uint32_t>("entry payload"));
    if (!ck.entries.emplace(std::move(name), Tensor(shape, std::move(v))).second) {
      throw CheckpointError("checkpoint '" + origin + "' has a duplicate entry");
    }
  }
  ck.iteration = r.get<std::uint64_t>("footer");
  ck.seed = r.get<std::uint64_t>("footer");
  if (r.pos != bytes.size()) {
    throw CheckpointError("checkpoint '" + origin + "' has " + std::to_string(bytes.size() - r.pos) +
                          " unexpected trailing bytes");
  }
  return ck;
}

void save_checkpoint(const fs::path& path, const Checkpoint& ck) {
  const auto bytes = serialize(ck);
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write checkpoint '" + path.string() + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("failed writing checkpoint '" + path.string() + "'");
}

Checkpoint load_checkpoint(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open checkpoint '" + path.string() + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize(bytes, path.string());
}

// ---- state <-> checkpoint -----------------------------------------------------

const char* stage_name(Stage s) {
  switch (s) {
    case Stage::kAutoencoder: return "autoencoder";
    case Stage::kBie: return "bie";
    case Stage::kDm: return "dm";
  }
  return "?";
}

Stage parse_stage(const std::string& name) {
  if (name == "autoencoder" || name == "ae") return Stage::kAutoencoder;
  if (name == "bie") return Stage::kBie;
  if (name == "dm") return Stage::kDm;
  throw Error("unknown training stage '" + name + "'");
}

namespace {

ParamSpecs stage_specs(Stage stage, const ModelConfig& m) {
  ParamSpecs s;
  auto append = [&](ParamSpecs more) { s.insert(s.end(), more.begin(), more.end()); };
  switch (stage) {
    case Stage::kAutoencoder:
      append(rve_params(m));
      append(rvd_params(m));
      break;
    case Stage::kBie:
      append(bie_params(m));
      append(rvd_params(m));
      break;
    case Stage::kDm:
      append(dm_params(m));
      break;
  }
  return s;
}

std::set<std::string> buffer_names(const ParamSpecs& specs) {
  std::set<std::string> out;
  for (const auto& s : specs)
    if (!s.trainable) out.insert(s.name);
  return out;
}

// Integer-valued and real-valued configuration keys.
std::vector<std::pair<std::string, double>> meta_of(const TrainState& s) {
  const auto& m = s.model;
  return {{"stage", static_cast<double>(static_cast<int>(s.stage))},
          {"frames", m.frames},
          {"height", m.height},
          {"width", m.width},
          {"base_channels", m.base_channels},
          {"dm_base", m.dm_base},
          {"dm_growth", m.dm_growth},
          {"dm_rdb_layers", m.dm_rdb_layers},
          {"dm_rdbs_per_level", m.dm_rdbs_per_level},
          {"dm_residual_scale", m.dm_residual_scale},
          {"bie_predicts_cell", m.bie_predicts_cell ? 1.0 : 0.0},
          {"flow_head_gain", m.flow_head_gain}};
}

double meta(const Checkpoint& ck, const std::string& key) {
  auto it = ck.entries.find("meta." + key);
  if (it == ck.entries.end() || it->second.size() != 1) {
    throw CheckpointError("checkpoint lacks configuration entry 'meta." + key + "'");
  }
  return it->second.item();
}

bool is_reserved(const std::string& name) {
  return name.rfind("meta.", 0) == 0 || name.rfind("adam.", 0) == 0;
}

}  // namespace

Checkpoint to_checkpoint(const TrainState& s) {
  Checkpoint ck;
  for (const auto& [k, v] : s.params) ck.entries.emplace(k, v);
  for (const auto& [k, v] : s.moments.m) ck.entries.emplace("adam.m." + k, v);
  for (const auto& [k, v] : s.moments.v) ck.entries.emplace("adam.v." + k, v);
  for (const auto& [k, v] : meta_of(s)) ck.entries.emplace("meta." + k, Tensor::scalar(static_cast<float>(v)));
  ck.iteration = s.iteration;
  ck.seed = s.seed;
  return ck;
}

ModelConfig model_from_checkpoint(const Checkpoint& ck) {
  ModelConfig m;
  m.frames = static_cast<int>(meta(ck, "frames"));
  m.height = static_cast<int>(meta(ck, "height"));
  m.width = static_cast<int>(meta(ck, "width"));
  m.base_channels = static_cast<int>(meta(ck, "base_channels"));
  m.dm_base = static_cast<int>(meta(ck, "dm_base"));
  m.dm_growth = static_cast<int>(meta(ck, "dm_growth"));
  m.dm_rdb_layers = static_cast<int>(meta(ck, "dm_rdb_layers"));
  m.dm_rdbs_per_level = static_cast<int>(meta(ck, "dm_rdbs_per_level"));
  // stored as f32; round-trip through float keeps repeated saves identical
  m.dm_residual_scale = static_cast<float>(meta(ck, "dm_residual_scale"));
  m.bie_predicts_cell = meta(ck, "bie_predicts_cell") != 0;
  m.flow_head_gain = static_cast<float>(meta(ck, "flow_head_gain"));
  m.validate();
  return m;
}

TrainState from_checkpoint(const Checkpoint& ck) {
  TrainState s;
  const int stage = static_cast<int>(meta(ck, "stage"));
  if (stage < 0 || stage > 2) throw CheckpointError("checkpoint has unknown stage " + std::to_string(stage));
  s.stage = static_cast<Stage>(stage);
  s.model = model_from_checkpoint(ck);
  const auto specs = stage_specs(s.stage, s.model);
  s.buffers = buffer_names(specs);
  s.params = initialize(specs, 0);
  restore_params(s.params, ck, "");
  for (const auto& [k, v] : ck.entries) {
    if (k.rfind("adam.m.", 0) == 0) s.moments.m.emplace(k.substr(7), v);
    if (k.rfind("adam.v.", 0) == 0) s.moments.v.emplace(k.substr(7), v);
    if (!is_reserved(k) && !s.params.count(k)) {
      throw CheckpointError("checkpoint entry '" + k + "' is not a parameter of the " + stage_name(s.stage) + " stage");
    }
  }
  s.iteration = ck.iteration;
  s.seed = ck.seed;
  return s;
}

void restore_params(ParamMap<float>& target, const Checkpoint& ck, const std::string& prefix) {
  for (auto& [name, t] : target) {
    if (name.rfind(prefix, 0) != 0) continue;
    auto it = ck.entries.find(name);
    if (it == ck.entries.end()) throw CheckpointError("checkpoint is missing parameter '" + name + "'");
    if (it->second.shape() != t.shape()) {
      throw ShapeError("checkpoint parameter '" + name + "' has shape " + to_string(it->second.shape()) +
                       " but the configuration expects " + to_string(t.shape()));
    }
    t = it->second;
  }
}

namespace {

TrainState fresh(Stage stage, const ModelConfig& model, std::uint64_t seed) {
  model.validate();
  TrainState s;
  s.stage = stage;
  s.model = model;
  const auto specs = stage_specs(stage, model);
  s.buffers = buffer_names(specs);
  s.params = initialize(specs, seed);
  s.seed = seed;
  return s;
}

}  // namespace

TrainState init_autoencoder(const ModelConfig& model, std::uint64_t seed) {
  return fresh(Stage::kAutoencoder, model, seed);
}

TrainState init_bie(const ModelConfig& model, const Checkpoint& stage1, std::uint64_t seed) {
  auto s = fresh(Stage::kBie, model, seed);
  restore_params(s.params, stage1, "rvd.");
  return s;
}

TrainState init_dm(const ModelConfig& model, std::uint64_t seed) { return fresh(Stage::kDm, model, seed); }

// ---- training ---------------------------------------------------------------

void TrainConfig::validate() const {
  if (!(lr > 0)) throw Error("train config: learning rate must be > 0");
  if (stage == Stage::kBie && !(rvd_lr >= 0 && rvd_lr < lr)) {
    throw Error("train config: the decoder learning rate must lie in [0, learning rate)");
  }
  if (batch < 1) throw Error("train config: batch must be >= 1");
  if (iterations < 0) throw Error("train config: iterations must be >= 0");
  if (!(clip_norm >= 0)) throw Error("train config: clip norm must be >= 0");
  if (tv_warmup < 0) throw Error("train config: tv warm-up must be >= 0");
  loss.validate();
}

TrainConfig default_train_config(Stage stage) {
  TrainConfig c;
  c.stage = stage;
  if (stage == Stage::kBie) c.loss.mode = DataTerm::kOrderInvariant;
  if (stage == Stage::kDm) c.batch = 16;
  return c;
}

namespace {

std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a * 0x9E3779B97F4A7C15ULL + b + 0xD1B54A32D192ED03ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace

std::vector<int> sample_indices(std::uint64_t seed, std::uint64_t iteration, int batch, int count) {
  if (count < 1) throw Error("sample_indices: empty dataset");
  std::vector<int> out;
  std::vector<int> perm;
  std::uint64_t cached_epoch = ~std::uint64_t{0};
  for (int b = 0; b < batch; ++b) {
    const std::uint64_t pos = iteration * static_cast<std::uint64_t>(batch) + static_cast<std::uint64_t>(b);
    const std::uint64_t epoch = pos / static_cast<std::uint64_t>(count);
    if (epoch != cached_epoch) {
      perm.resize(static_cast<std::size_t>(count));
      std::iota(perm.begin(), perm.end(), 0);
      std::mt19937_64 rng(mix(seed, epoch));
      std::shuffle(perm.begin(), perm.end(), rng);
      cached_epoch = epoch;
    }
    out.push_back(perm[static_cast<std::size_t>(pos % static_cast<std::uint64_t>(count))]);
  }
  return out;
}

void check_dataset(const std::vector<BlurPair>& data, const ModelConfig& model) {
  if (data.empty()) throw Error("dataset is empty");
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto& p = data[i];
    const Shape expect{1, 3, model.height, model.width};
    if (static_cast<int>(p.source.frames.size()) != model.frames) {
      throw Error("sequence " + std::to_string(i) + " has " + std::to_string(p.source.frames.size()) +
                  " frames but the model expects " + std::to_string(model.frames));
    }
    if (p.blurred.shape() != expect) {
      throw ShapeError("sequence " + std::to_string(i) + " has images of shape " + to_string(p.blurred.shape()) +
                       " but the model expects " + to_string(expect));
    }
    for (const auto& f : p.source.frames) {
      if (f.shape() != expect) throw ShapeError("sequence " + std::to_string(i) + " has a frame of shape " + to_string(f.shape()));
    }
  }
}

std::vector<Pyramid<float>> frame_pyramids(const std::vector<Tensor>& frames) {
  std::vector<Pyramid<float>> out;
  for (const auto& f : frames) out.push_back(image_pyramid(f));
  return out;
}

namespace {

struct Batch {
  Tensor blurred;
  std::vector<Tensor> frames;
  Tensor center;
};

Batch make_batch(const TrainConfig& cfg, const std::vector<BlurPair>& data, std::uint64_t iteration) {
  const auto idx = sample_indices(cfg.seed, iteration, cfg.batch, static_cast<int>(data.size()));
  std::vector<BlurPair> pairs;
  for (std::size_t b = 0; b < idx.size(); ++b) {
    const auto& p = data[static_cast<std::size_t>(idx[b])];
    pairs.push_back(cfg.augment ? augment(p, mix(mix(cfg.seed, iteration), b + 1)) : p);
  }
  Batch out;
  std::vector<Tensor> parts;
  for (const auto& p : pairs) parts.push_back(p.blurred);
  out.blurred = concat_batch(parts);
  const std::size_t N = pairs.front().source.frames.size();
  for (std::size_t n = 0; n < N; ++n) {
    parts.clear();
    for (const auto& p : pairs) parts.push_back(p.source.frames[n]);
    out.frames.push_back(concat_batch(parts));
  }
  out.center = out.frames[N / 2];
  return out;
}

struct StepLoss {
  Tensor total;
  std::vector<double> components;
};

StepLoss stage_loss(const TrainConfig& cfg, const TrainState& s, const ParamMap<float>& p, const Batch& b,
                    BufferUpdates* updates) {
  StepLoss out;
  LossConfig loss = cfg.loss;
  if (cfg.tv_warmup > 0 && s.iteration < static_cast<std::uint64_t>(cfg.tv_warmup)) {
    loss.mu *= static_cast<double>(s.iteration) / cfg.tv_warmup;
  }
  const auto& m = s.model;
  auto add_terms = [&](const LossTerms<float>& t) {
    out.total = t.total;
    for (double d : t.data) out.components.push_back(d);
    for (double v : t.tv) out.components.push_back(v);
  };
  switch (s.stage) {
    case Stage::kAutoencoder: {
      auto state = rve_forward(p, m, b.frames);
      auto pred = rvd_rollout(p, m, state, b.center, m.frames);
      add_terms(total_loss(pred, frame_pyramids(b.frames), loss));
      break;
    }
    case Stage::kBie: {
      NormContext norm{NormMode::kTrain, 0.1, updates};
      auto state = bie_forward(p, m, b.blurred, b.center, norm);
      auto pred = rvd_rollout(p, m, state, b.center, m.frames);
      add_terms(total_loss(pred, frame_pyramids(b.frames), loss));
      break;
    }
    case Stage::kDm: {
      out.total = mean(abs(sub(dm_forward(p, m, b.blurred), b.center)));
      out.components.push_back(out.total.item());
      break;
    }
  }
  return out;
}

double learning_rate(const TrainConfig& cfg, Stage stage, const std::string& name) {
  if (stage == Stage::kBie && name.rfind("rvd.", 0) == 0) return cfg.rvd_lr;
  return cfg.lr;
}

}  // namespace

TrainResult train(const TrainConfig& cfg, TrainState state, const std::vector<BlurPair>& data,
                  const TrainHooks& hooks) {
  cfg.validate();
  if (cfg.stage != state.stage) {
    throw Error(std::string("train: config is for stage '") + stage_name(cfg.stage) + "' but the state is '" +
                stage_name(state.stage) + "'");
  }
  state.model.validate();
  check_dataset(data, state.model);
  if (state.iteration > static_cast<std::uint64_t>(cfg.iterations)) {
    throw Error("train: state has already completed " + std::to_string(state.iteration) + " of " +
                std::to_string(cfg.iterations) + " iterations");
  }

  TrainResult result;
  if (hooks.log && state.iteration == 0) {
    *hooks.log << "# iter loss lr "
               << (state.stage == Stage::kDm ? "l1" : "data1 data2 data3 data4 tv1 tv2 tv3 tv4") << '\n';
  }
  while (state.iteration < static_cast<std::uint64_t>(cfg.iterations)) {
    const auto batch = make_batch(cfg, data, state.iteration);

    Tape<float> tape;
    ParamMap<float> watched;
    for (const auto& [name, t] : state.params) {
      watched.emplace(name, state.buffers.count(name) ? t : tape.watch(t));
    }
    BufferUpdates updates;
    auto loss = stage_loss(cfg, state, watched, batch, &updates);
    const double value = loss.total.item();
    if (!std::isfinite(value)) {
      throw Error("non-finite loss at iteration " + std::to_string(state.iteration) + " (stage " +
                  stage_name(state.stage) + ")");
    }
    const auto grads = tape.backward(loss.total);

    std::map<std::string, Tensor> g;
    for (const auto& [name, t] : watched) {
      if (!state.buffers.count(name)) g.emplace(name, grads.of(t).detach());
    }
    clip_global_norm(g, cfg.clip_norm);

    // one Adam step per learning-rate group, sharing the step count
    std::map<double, std::map<std::string, Tensor>> groups;
    for (auto& [name, t] : g) groups[learning_rate(cfg, state.stage, name)].emplace(name, std::move(t));
    const std::uint64_t step = state.iteration + 1;
    for (const auto& [lr, group] : groups) {
      if (lr == 0) continue;  // frozen group
      adam_step(state.params, group, state.moments, step, lr);
    }
    for (auto& [name, t] : updates) state.params[name] = t;
    state.iteration = step;
    result.losses.push_back(value);

    if (hooks.log && (step % static_cast<std::uint64_t>(std::max(hooks.log_every, 1)) == 0 ||
                      step == static_cast<std::uint64_t>(cfg.iterations))) {
      std::ostringstream line;
      line << step << ' ' << std::setprecision(8) << value << ' ' << std::setprecision(4) << cfg.lr;
      line << std::setprecision(6);
      for (double c : loss.components) line << ' ' << c;
      *hooks.log << line.str() << '\n';
    }
    if (hooks.on_checkpoint && hooks.checkpoint_every > 0 &&
        step % static_cast<std::uint64_t>(hooks.checkpoint_every) == 0) {
      hooks.on_checkpoint(state);
    }
  }
  result.state = std::move(state);
  return result;
}

TrainResult train_autoencoder(const TrainConfig& cfg, const ModelConfig& model, const std::vector<BlurPair>& data,
                              const TrainHooks& hooks) {
  auto c = cfg;
  c.stage = Stage::kAutoencoder;
  c.validate();
  check_dataset(data, model);
  return train(c, init_autoencoder(model, cfg.seed), data, hooks);
}

TrainResult train_bie(const TrainConfig& cfg, const Checkpoint& stage1, const std::vector<BlurPair>& data,
                      const TrainHooks& hooks) {
  auto c = cfg;
  c.stage = Stage::kBie;
  c.validate();
  const auto model = model_from_checkpoint(stage1);
  check_dataset(data, model);
  return train(c, init_bie(model, stage1, cfg.seed), data, hooks);
}

TrainResult train_dm(const TrainConfig& cfg, const ModelConfig& model, const std::vector<BlurPair>& data,
                     const TrainHooks& hooks) {
  auto c = cfg;
  c.stage = Stage::kDm;
  c.validate();
  check_dataset(data, model);
  return train(c, init_dm(model, cfg.seed), data, hooks);
}

// ---- evaluation -------------------------------------------------------------

namespace {

Reconstruction finish(PredictionSet<float> pred) {
  Reconstruction r;
  for (const auto& f : pred.frames) r.frames.push_back(f[kPyramidLevels - 1]);
  r.pred = std::move(pred);
  return r;
}

void require_stage(const TrainState& s, Stage want) {
  if (s.stage != want) {
    throw Error(std::string("expected a '") + stage_name(want) + "' checkpoint, got '" + stage_name(s.stage) + "'");
  }
}

}  // namespace

Reconstruction reconstruct_autoencoder(const TrainState& ae, const VideoSequence& video) {
  require_stage(ae, Stage::kAutoencoder);
  auto state = rve_forward(ae.params, ae.model, video.frames);
  return finish(rvd_rollout(ae.params, ae.model, state, video.center(), ae.model.frames));
}

Reconstruction reconstruct_from_blur(const TrainState& bie, const Tensor& blurred, const Tensor& sharp, NormMode norm) {
  require_stage(bie, Stage::kBie);
  NormContext ctx{norm, 0.1, nullptr};
  auto state = bie_forward(bie.params, bie.model, blurred, sharp, ctx);
  return finish(rvd_rollout(bie.params, bie.model, state, sharp, bie.model.frames));
}

Tensor deblur(const TrainState& dm, const Tensor& blurred) {
  require_stage(dm, Stage::kDm);
  return dm_forward(dm.params, dm.model, blurred, true);
}

double order_invariant_error(const std::vector<Tensor>& pred, const std::vector<Tensor>& gt) {
  return order_invariant_loss(pred, gt).item();
}

double mean_l1(const std::vector<Tensor>& pred, const std::vector<Tensor>& gt) {
  if (pred.size() != gt.size() || pred.empty()) throw ShapeError("mean_l1: frame counts differ");
  double acc = 0;
  for (std::size_t n = 0; n < pred.size(); ++n) acc += mean(abs(sub(pred[n], gt[n]))).item();
  return acc / static_cast<double>(pred.size());
}

}  // namespace blurvid
