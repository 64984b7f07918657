// blurvid command-line entry point.
//
//   blurvid synth      --count 2 --frames 5 --size 64 --seed 7 --out data/
//   blurvid train-ae   --dataset data/ --out ae.ckpt
//   blurvid train-bie  --dataset data/ --stage1 ae.ckpt --out bie.ckpt
//   blurvid train-dm   --dataset data/ --out dm.ckpt
//   blurvid infer      --blurred x.png --dm dm.ckpt --bie bie.ckpt --out frames/
//   blurvid gradcheck
//   blurvid eval       --dataset data/ --bie bie.ckpt --dm dm.ckpt
//   blurvid params
//
// Exit status: 0 success, 1 usage error, 2 runtime failure.

#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <memory>
#include <optional>
#include <string>

#include "blurvid/datagen.hpp"
#include "blurvid/gradcheck_suite.hpp"
#include "blurvid/image_io.hpp"
#include "blurvid/losses.hpp"
#include "blurvid/trainer.hpp"

namespace fs = std::filesystem;
using namespace blurvid;

namespace {

// Bad arguments discovered after parsing; reported with exit status 1.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

int worker_threads() {
  const char* env = std::getenv("MUL_THREADS");
  if (!env || !*env) return 1;
  char* end = nullptr;
  const long n = std::strtol(env, &end, 10);
  if (*end != '\0' || n < 1 || n > 1024) throw UsageError("MUL_THREADS must be an integer in [1, 1024], got '" + std::string(env) + "'");
  return static_cast<int>(n);
}

// Prints "key: value" lines under a "config" header.
class ConfigPrinter {
 public:
  explicit ConfigPrinter(const std::string& command) { std::cout << "# config (" << command << ")\n"; }
  template <typename V>
  ConfigPrinter& operator()(const std::string& key, const V& value) {
    std::cout << "  " << std::left << std::setw(20) << key << value << '\n';
    return *this;
  }
  ~ConfigPrinter() { std::cout << std::flush; }
};

struct ModelFlags {
  std::string preset = "desk";
  std::optional<int> base_channels, dm_base, dm_growth, dm_rdb_layers, dm_rdbs;
  bool bie_cell = false;

  void add(CLI::App* app, bool rvd, bool dm) {
    app->add_option("--preset", preset, "Network widths: desk or full")->check(CLI::IsMember({"desk", "full"}));
    if (rvd) {
      app->add_option("--base-channels", base_channels, "Encoder/decoder base width")->check(CLI::PositiveNumber);
      app->add_flag("--bie-cell", bie_cell, "BIE also predicts the decoder cell state");
    }
    if (dm) {
      app->add_option("--dm-base", dm_base, "Deblurring module base width")->check(CLI::PositiveNumber);
      app->add_option("--dm-growth", dm_growth, "Residual dense block growth rate")->check(CLI::PositiveNumber);
      app->add_option("--dm-rdb-layers", dm_rdb_layers, "Layers per residual dense block")->check(CLI::PositiveNumber);
      app->add_option("--dm-rdbs", dm_rdbs, "Residual dense blocks per level")->check(CLI::PositiveNumber);
    }
  }

  ModelConfig resolve(int frames, int height, int width) const {
    ModelConfig m = preset == "full" ? ModelConfig::full() : ModelConfig::desk();
    m.frames = frames;
    m.height = height;
    m.width = width;
    if (base_channels) m.base_channels = *base_channels;
    if (dm_base) m.dm_base = *dm_base;
    if (dm_growth) m.dm_growth = *dm_growth;
    if (dm_rdb_layers) m.dm_rdb_layers = *dm_rdb_layers;
    if (dm_rdbs) m.dm_rdbs_per_level = *dm_rdbs;
    m.bie_predicts_cell = bie_cell;
    return m;
  }
};

void print_model(ConfigPrinter& p, const ModelConfig& m) {
  p("frames", m.frames)("height", m.height)("width", m.width)("base_channels", m.base_channels)("dm_base", m.dm_base)(
      "dm_growth", m.dm_growth)("dm_rdb_layers", m.dm_rdb_layers)("dm_rdbs_per_level", m.dm_rdbs_per_level)(
      "bie_predicts_cell", m.bie_predicts_cell ? "true" : "false");
}

void require_file(const fs::path& p, const char* what) {
  if (!fs::exists(p)) throw Error(std::string(what) + " not found: " + p.string());
}

void require_size(int size, const char* what) {
  if (size < 16 || size % 16) throw UsageError(std::string(what) + " must be a positive multiple of 16, got " + std::to_string(size));
}

// ---- synth ------------------------------------------------------------------

struct SynthArgs {
  int count = 8, frames = 5, size = 64;
  std::uint64_t seed = 1;
  std::string out;
  SceneOptions scene;
};

int run_synth(const SynthArgs& a) {
  require_size(a.size, "--size");
  if (a.frames < 2) throw UsageError("--frames must be >= 2");
  if (a.scene.min_sprites > a.scene.max_sprites) throw UsageError("--min-sprites exceeds --max-sprites");
  const int threads = worker_threads();
  {
    ConfigPrinter p("synth");
    p("count", a.count)("frames", a.frames)("size", a.size)("seed", a.seed)("out", a.out)("min_sprites", a.scene.min_sprites)(
        "max_sprites", a.scene.max_sprites)("max_speed", a.scene.max_speed)("threads", threads);
  }
  const auto pairs = synth_dataset(a.count, a.frames, a.size, a.seed, threads, a.scene);
  write_dataset(pairs, a.out);
  std::cout << "wrote " << pairs.size() << " sequences to " << a.out << '\n';
  return 0;
}

// ---- training ---------------------------------------------------------------

struct TrainArgs {
  std::string dataset, out, resume, stage1, log;
  std::optional<double> lr, rvd_lr, mu;
  std::optional<int> batch, iterations, tv_warmup;
  std::uint64_t seed = 1;
  bool no_augment = false;
  std::string loss;
  int log_every = 10, checkpoint_every = 0;
  ModelFlags model;
};

void add_train_options(CLI::App* app, TrainArgs& a, Stage stage) {
  app->add_option("--dataset", a.dataset, "Dataset directory written by synth")->required();
  app->add_option("--out", a.out, "Checkpoint to write")->required();
  app->add_option("--resume", a.resume, "Continue from this checkpoint of the same stage");
  app->add_option("--lr", a.lr, "Learning rate")->check(CLI::PositiveNumber);
  app->add_option("--batch", a.batch, "Pairs per update")->check(CLI::PositiveNumber);
  app->add_option("--iterations", a.iterations, "Total number of updates")->check(CLI::NonNegativeNumber);
  app->add_option("--seed", a.seed, "Seed for initialization, sampling and augmentation");
  app->add_flag("--no-augment", a.no_augment, "Disable flip/zoom augmentation");
  app->add_option("--log", a.log, "Write the loss trace here instead of stdout");
  app->add_option("--log-every", a.log_every, "Log every k-th update")->check(CLI::PositiveNumber);
  app->add_option("--checkpoint-every", a.checkpoint_every, "Also write --out every k updates")->check(CLI::NonNegativeNumber);
  if (stage != Stage::kDm) {
    app->add_option("--mu", a.mu, "Flow smoothness weight")->check(CLI::NonNegativeNumber);
    app->add_option("--tv-warmup", a.tv_warmup, "Ramp the smoothness weight over this many updates")
        ->check(CLI::NonNegativeNumber);
  }
  if (stage == Stage::kBie) {
    app->add_option("--stage1", a.stage1, "Autoencoder checkpoint providing the decoder")->required();
    app->add_option("--rvd-lr", a.rvd_lr, "Decoder fine-tuning rate (0 freezes it)")->check(CLI::NonNegativeNumber);
    app->add_option("--loss", a.loss, "Data term")->check(CLI::IsMember({"order-invariant", "reconstruction"}));
  }
  if (stage != Stage::kBie) a.model.add(app, stage == Stage::kAutoencoder, stage == Stage::kDm);
}

int run_train(const TrainArgs& a, Stage stage) {
  TrainConfig cfg = default_train_config(stage);
  if (a.lr) cfg.lr = *a.lr;
  if (a.rvd_lr) cfg.rvd_lr = *a.rvd_lr;
  if (a.batch) cfg.batch = *a.batch;
  if (a.iterations) cfg.iterations = *a.iterations;
  if (a.tv_warmup) cfg.tv_warmup = *a.tv_warmup;
  if (a.mu) cfg.loss.mu = *a.mu;
  if (a.loss == "reconstruction") cfg.loss.mode = DataTerm::kReconstruction;
  if (a.loss == "order-invariant") cfg.loss.mode = DataTerm::kOrderInvariant;
  cfg.seed = a.seed;
  cfg.augment = !a.no_augment;
  try {
    cfg.validate();
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
  const int threads = worker_threads();

  require_file(a.dataset, "dataset");
  const auto data = read_dataset(a.dataset);
  const int frames = static_cast<int>(data.front().source.frames.size());
  const int height = static_cast<int>(data.front().blurred.shape()[2]);
  const int width = static_cast<int>(data.front().blurred.shape()[3]);

  TrainState state;
  std::optional<Checkpoint> stage1;
  if (!a.resume.empty()) {
    require_file(a.resume, "checkpoint");
    state = from_checkpoint(load_checkpoint(a.resume));
    if (state.stage != stage) {
      throw Error("checkpoint " + a.resume + " is from stage " + stage_name(state.stage) + ", expected " + stage_name(stage));
    }
  } else if (stage == Stage::kBie) {
    require_file(a.stage1, "stage-1 checkpoint");
    stage1 = load_checkpoint(a.stage1);
    auto model = model_from_checkpoint(*stage1);
    if (model.frames != frames || model.height != height || model.width != width) {
      throw Error("stage-1 checkpoint was trained on " + std::to_string(model.frames) + " frames of " +
                  std::to_string(model.height) + "x" + std::to_string(model.width) + " but the dataset has " +
                  std::to_string(frames) + " frames of " + std::to_string(height) + "x" + std::to_string(width));
    }
    state = init_bie(model, *stage1, cfg.seed);
  } else {
    const auto model = a.model.resolve(frames, height, width);
    state = stage == Stage::kDm ? init_dm(model, cfg.seed) : init_autoencoder(model, cfg.seed);
  }
  check_dataset(data, state.model);

  {
    ConfigPrinter p(std::string("train-") + (stage == Stage::kAutoencoder ? "ae" : stage == Stage::kBie ? "bie" : "dm"));
    p("stage", stage_name(stage))("dataset", a.dataset)("pairs", data.size())("out", a.out);
    if (!a.resume.empty()) p("resume", a.resume)("resume_iteration", state.iteration);
    if (stage == Stage::kBie) p("stage1", a.stage1.empty() ? "(from resume)" : a.stage1);
    p("lr", cfg.lr);
    if (stage == Stage::kBie) p("rvd_lr", cfg.rvd_lr);
    p("batch", cfg.batch)("iterations", cfg.iterations)("seed", cfg.seed)("augment", cfg.augment ? "true" : "false")(
        "clip_norm", cfg.clip_norm);
    if (stage != Stage::kDm) {
      p("loss", cfg.loss.mode == DataTerm::kOrderInvariant ? "order-invariant" : "reconstruction")("mu", cfg.loss.mu)(
          "tv_warmup", cfg.tv_warmup);
    }
    p("threads", threads);
    print_model(p, state.model);
  }

  std::unique_ptr<std::ofstream> log_file;
  TrainHooks hooks;
  hooks.log = &std::cout;
  if (!a.log.empty()) {
    log_file = std::make_unique<std::ofstream>(a.log);
    if (!*log_file) throw Error("cannot open log file " + a.log);
    hooks.log = log_file.get();
  }
  hooks.log_every = a.log_every;
  hooks.checkpoint_every = a.checkpoint_every;
  hooks.on_checkpoint = [&](const TrainState& s) { save_checkpoint(a.out, to_checkpoint(s)); };

  auto result = train(cfg, std::move(state), data, hooks);
  save_checkpoint(a.out, to_checkpoint(result.state));
  std::cout << "saved " << a.out << " at iteration " << result.state.iteration;
  if (!result.losses.empty()) std::cout << ", final loss " << result.losses.back();
  std::cout << '\n';
  return 0;
}

// ---- infer / eval -------------------------------------------------------------

TrainState load_stage(const std::string& path, Stage expected) {
  require_file(path, "checkpoint");
  auto s = from_checkpoint(load_checkpoint(path));
  if (s.stage != expected) {
    throw Error("checkpoint " + path + " holds stage " + stage_name(s.stage) + ", expected " + stage_name(expected));
  }
  return s;
}

void check_resolution(const TrainState& s, const Tensor& image, const std::string& what) {
  if (image.shape()[2] != s.model.height || image.shape()[3] != s.model.width) {
    throw Error(what + " is " + std::to_string(image.shape()[3]) + "x" + std::to_string(image.shape()[2]) +
                " but the checkpoint expects " + std::to_string(s.model.width) + "x" + std::to_string(s.model.height));
  }
}

struct InferArgs {
  std::string blurred, dm, bie, out;
};

int run_infer(const InferArgs& a) {
  worker_threads();
  require_file(a.blurred, "blurred image");
  const auto dm = load_stage(a.dm, Stage::kDm);
  const auto bie = load_stage(a.bie, Stage::kBie);
  const auto image = read_png(a.blurred);
  if (image.shape()[2] % 16 || image.shape()[3] % 16) {
    throw Error("image size " + std::to_string(image.shape()[3]) + "x" + std::to_string(image.shape()[2]) +
                " is not divisible by 16");
  }
  check_resolution(dm, image, a.blurred);
  check_resolution(bie, image, a.blurred);
  {
    ConfigPrinter p("infer");
    p("blurred", a.blurred)("dm", a.dm)("bie", a.bie)("out", a.out)("frames", bie.model.frames)(
        "height", bie.model.height)("width", bie.model.width);
  }
  const Tensor center = deblur(dm, image);
  const auto rec = reconstruct_from_blur(bie, image, center);
  fs::create_directories(a.out);
  write_png(fs::path(a.out) / "deblurred.png", center);
  for (std::size_t n = 0; n < rec.frames.size(); ++n) {
    char name[32];
    std::snprintf(name, sizeof name, "frame_%02zu.png", n);
    write_png(fs::path(a.out) / name, rec.frames[n]);
  }
  std::cout << "wrote " << rec.frames.size() << " frames and deblurred.png to " << a.out << '\n';
  return 0;
}

struct EvalArgs {
  std::string dataset, bie, dm;
  bool true_center = false;
};

int run_eval(const EvalArgs& a) {
  if (a.bie.empty() && a.dm.empty()) throw UsageError("eval needs --bie, --dm or both");
  worker_threads();
  require_file(a.dataset, "dataset");
  const auto data = read_dataset(a.dataset);
  std::optional<TrainState> dm, bie;
  if (!a.dm.empty()) dm = load_stage(a.dm, Stage::kDm);
  if (!a.bie.empty()) bie = load_stage(a.bie, Stage::kBie);
  if (dm) check_dataset(data, dm->model);
  if (bie) check_dataset(data, bie->model);
  {
    ConfigPrinter p("eval");
    p("dataset", a.dataset)("pairs", data.size())("bie", a.bie.empty() ? "(none)" : a.bie)("dm", a.dm.empty() ? "(none)" : a.dm)(
        "center", a.true_center || !dm ? "ground truth" : "deblurred");
  }
  double err = 0, psnr_sum = 0;
  for (const auto& pair : data) {
    std::optional<Tensor> center;
    if (dm) {
      center = deblur(*dm, pair.blurred);
      psnr_sum += psnr(*center, pair.source.center());
    }
    if (bie) {
      const Tensor& sharp = (a.true_center || !dm) ? pair.source.center() : *center;
      err += order_invariant_error(reconstruct_from_blur(*bie, pair.blurred, sharp).frames, pair.source.frames);
    }
  }
  const double count = static_cast<double>(data.size());
  if (bie) std::cout << "order_invariant_error " << err / count << '\n';
  if (dm) std::cout << "dm_psnr_db " << psnr_sum / count << '\n';
  return 0;
}

// ---- gradcheck / params --------------------------------------------------------

int run_gradcheck(int seeds, const std::string& filter) {
  worker_threads();
  {
    ConfigPrinter p("gradcheck");
    p("seeds", seeds)("filter", filter.empty() ? "(all)" : filter)("precision", "double");
  }
  const auto rows = run_gradcheck_suite(seeds, filter, &std::cout);
  if (rows.empty()) throw UsageError("no gradient check matches '" + filter + "'");
  int failed = 0;
  for (const auto& r : rows) failed += !r.passed;
  std::cout << rows.size() - static_cast<std::size_t>(failed) << "/" << rows.size() << " passed\n";
  return failed ? 2 : 0;
}

int run_params(const ModelFlags& flags, int frames, int size) {
  require_size(size, "--size");
  worker_threads();
  const auto m = flags.resolve(frames, size, size);
  m.validate();
  {
    ConfigPrinter p("params");
    p("preset", flags.preset);
    print_model(p, m);
  }
  std::int64_t total = 0;
  for (const auto& [name, count] : parameter_counts(m)) {
    std::cout << std::left << std::setw(6) << name << count << '\n';
    total += count;
  }
  std::cout << std::left << std::setw(6) << "total" << total << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"blurvid: learn to turn one motion-blurred image into a short video"};
  app.require_subcommand(1);

  SynthArgs synth;
  auto* c_synth = app.add_subcommand("synth", "Generate a synthetic blurred-video dataset");
  c_synth->add_option("--count", synth.count, "Number of sequences")->check(CLI::PositiveNumber);
  c_synth->add_option("--frames", synth.frames, "Frames per sequence");
  c_synth->add_option("--size", synth.size, "Square frame size, multiple of 16");
  c_synth->add_option("--seed", synth.seed, "Seed of the first sequence");
  c_synth->add_option("--out", synth.out, "Output directory")->required();
  c_synth->add_option("--min-sprites", synth.scene.min_sprites)->check(CLI::PositiveNumber);
  c_synth->add_option("--max-sprites", synth.scene.max_sprites)->check(CLI::PositiveNumber);
  c_synth->add_option("--max-speed", synth.scene.max_speed, "Pixels per frame")->check(CLI::NonNegativeNumber);

  TrainArgs ae, bie, dm;
  auto* c_ae = app.add_subcommand("train-ae", "Stage 1: train the video autoencoder");
  add_train_options(c_ae, ae, Stage::kAutoencoder);
  auto* c_bie = app.add_subcommand("train-bie", "Stage 2: train the blurred-image encoder");
  add_train_options(c_bie, bie, Stage::kBie);
  auto* c_dm = app.add_subcommand("train-dm", "Train the deblurring module");
  add_train_options(c_dm, dm, Stage::kDm);

  InferArgs infer;
  auto* c_infer = app.add_subcommand("infer", "Blurred image -> deblurred center and frame sequence");
  c_infer->add_option("--blurred", infer.blurred, "Blurred PNG")->required();
  c_infer->add_option("--dm", infer.dm, "Deblurring checkpoint")->required();
  c_infer->add_option("--bie", infer.bie, "Stage-2 checkpoint")->required();
  c_infer->add_option("--out", infer.out, "Output directory")->required();

  int gc_seeds = 5;
  std::string gc_filter;
  auto* c_gc = app.add_subcommand("gradcheck", "Run the finite-difference gradient suite");
  c_gc->add_option("--seeds", gc_seeds, "Seeds per case")->check(CLI::PositiveNumber);
  c_gc->add_option("--filter", gc_filter, "Only cases whose name contains this");

  EvalArgs eval;
  auto* c_eval = app.add_subcommand("eval", "Order-invariant error and deblurring PSNR on a dataset");
  c_eval->add_option("--dataset", eval.dataset, "Dataset directory")->required();
  c_eval->add_option("--bie", eval.bie, "Stage-2 checkpoint");
  c_eval->add_option("--dm", eval.dm, "Deblurring checkpoint");
  c_eval->add_flag("--true-center", eval.true_center, "Feed the ground-truth center frame to the encoder");

  ModelFlags pflags;
  int p_frames = 5, p_size = 64;
  auto* c_params = app.add_subcommand("params", "Print per-network parameter counts");
  pflags.add(c_params, true, true);
  c_params->add_option("--frames", p_frames)->check(CLI::Range(2, 64));
  c_params->add_option("--size", p_size);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (*c_synth) return run_synth(synth);
    if (*c_ae) return run_train(ae, Stage::kAutoencoder);
    if (*c_bie) return run_train(bie, Stage::kBie);
    if (*c_dm) return run_train(dm, Stage::kDm);
    if (*c_infer) return run_infer(infer);
    if (*c_gc) return run_gradcheck(gc_seeds, gc_filter);
    if (*c_eval) return run_eval(eval);
    if (*c_params) return run_params(pflags, p_frames, p_size);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 1;
}
