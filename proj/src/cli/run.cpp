#include "handformer/cli/run.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <optional>
#include <ostream>
#include <stdexcept>

#include "handformer/analysis/activity.hpp"
#include "handformer/error.hpp"
#include "handformer/model/frame_features.hpp"
#include "handformer/pose/files.hpp"
#include "handformer/pose/micro_action.hpp"
#include "handformer/pose/synthetic.hpp"
#include "handformer/train/batch.hpp"
#include "handformer/train/checkpoint.hpp"
#include "handformer/train/flops.hpp"
#include "handformer/train/model_check.hpp"
#include "handformer/train/trainer.hpp"

namespace handformer::cli {
namespace {

namespace fs = std::filesystem;

constexpr const char* kModelGroup = "Model";
constexpr std::uint64_t kDefaultSeed = 7;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// One `event=<name> key=value ...` line, written when the builder goes away.
class Line {
 public:
  Line(std::ostream& out, std::string_view event) : out_(out), text_("event=") { text_ += event; }
  ~Line() { out_ << text_ << '\n' << std::flush; }
  Line(const Line&) = delete;
  Line& operator=(const Line&) = delete;

  Line& operator()(std::string_view key, std::string_view value) {
    text_ += ' ';
    text_ += key;
    text_ += '=';
    text_ += value;
    return *this;
  }
  Line& operator()(std::string_view key, const std::string& value) { return (*this)(key, std::string_view(value)); }
  Line& operator()(std::string_view key, const char* value) { return (*this)(key, std::string_view(value)); }
  Line& operator()(std::string_view key, std::size_t value) { return (*this)(key, std::to_string(value)); }
  Line& operator()(std::string_view key, int value) { return (*this)(key, std::to_string(value)); }
  Line& operator()(std::string_view key, double value, const char* format = "%.6g") {
    char buf[64];
    std::snprintf(buf, sizeof buf, format, value);
    return (*this)(key, std::string_view(buf));
  }

 private:
  std::ostream& out_;
  std::string text_;
};

struct ModelFlags {
  std::string preset = "tiny";
  std::optional<std::size_t> d, tn, dt, joints, n, k, r, tprime;
  std::optional<double> lambda1, lambda2, lambda3;
  bool pose_only = false;
  bool tokenizer = false;
  bool no_tokenizer = false;
  bool wrist_relative = false;
  bool joint_embeddings = false;
};

void add_model_flags(CLI::App* app, ModelFlags& f, std::vector<std::string> presets, bool frame_flags = true) {
  app->add_option("--preset", f.preset, "Base configuration")
      ->check(CLI::IsMember(std::move(presets)))
      ->capture_default_str()
      ->group(kModelGroup);
  app->add_option("--d", f.d, "Model width d")->check(CLI::PositiveNumber)->group(kModelGroup);
  app->add_option("--tn", f.tn, "Temporal transformer layers T_n")->check(CLI::PositiveNumber)->group(kModelGroup);
  app->add_option("--dt", f.dt, "Trajectory token width d_t (even)")->check(CLI::PositiveNumber)->group(kModelGroup);
  app->add_option("--joints", f.joints, "Joints per hand")->check(CLI::IsMember({6, 11, 21}))->group(kModelGroup);
  app->add_option("--n", f.n, "Frames per micro-action N")->check(CLI::PositiveNumber)->group(kModelGroup);
  app->add_option("--k", f.k, "Micro-actions K")->check(CLI::PositiveNumber)->group(kModelGroup);
  app->add_option("--r", f.r, "Micro-action stride R")->check(CLI::PositiveNumber)->group(kModelGroup);
  app->add_option("--tprime", f.tprime, "Resampled length T'; K follows from N and R")
      ->check(CLI::PositiveNumber)
      ->group(kModelGroup);
  app->add_option("--lambda1", f.lambda1, "Verb loss weight")->check(CLI::NonNegativeNumber)->group(kModelGroup);
  app->add_flag("--wrist-relative", f.wrist_relative, "Subtract the wrist from every joint")->group(kModelGroup);
  app->add_flag("--joint-embeddings", f.joint_embeddings, "Add learned joint identity embeddings")
      ->group(kModelGroup);
  if (!frame_flags) return;
  app->add_option("--lambda2", f.lambda2, "Object loss weight")->check(CLI::NonNegativeNumber)->group(kModelGroup);
  app->add_option("--lambda3", f.lambda3, "Anticipation loss weight")
      ->check(CLI::NonNegativeNumber)
      ->group(kModelGroup);
  auto* pose_only = app->add_flag("--pose-only", f.pose_only, "Drop frame features")->group(kModelGroup);
  auto* tok = app->add_flag("--tokenizer", f.tokenizer, "Use the multimodal tokenizer (default)")->group(kModelGroup);
  auto* no_tok = app->add_flag("--no-tokenizer", f.no_tokenizer, "Bypass the multimodal tokenizer")->group(kModelGroup);
  tok->excludes(no_tok);
  tok->excludes(pose_only);
}

bool any_model_flag(const CLI::App* app, std::string* which) {
  for (const CLI::Option* opt : app->get_options()) {
    if (opt->get_group() == kModelGroup && opt->count() > 0) {
      *which = opt->get_name();
      return true;
    }
  }
  return false;
}

model::ModelConfig resolve_model(const ModelFlags& f, const std::string& preset_name) {
  model::ModelConfig c = model::preset_config(preset_name);
  if (f.d) c.d = *f.d;
  if (f.tn) c.layers = *f.tn;
  if (f.dt) c.token_dim = *f.dt;
  if (f.joints) c.joints = *f.joints;
  if (f.n) c.frames_per_action = *f.n;
  if (f.r) c.stride = *f.r;
  if (f.tprime) {
    const std::size_t n = c.frames_per_action, r = c.stride;
    if (f.k) {
      const std::size_t implied = (*f.k - 1) * r + n;
      if (implied != *f.tprime) {
        throw UsageError("--tprime " + std::to_string(*f.tprime) + " conflicts with --k " +
                         std::to_string(*f.k) + ": (K-1)R+N = " + std::to_string(implied) +
                         " with N=" + std::to_string(n) + " R=" + std::to_string(r));
      }
      c.micro_actions = *f.k;
    } else {
      try {
        c.micro_actions = pose::plan_factorization(*f.tprime, n, r).count;
      } catch (const Error& e) {
        throw UsageError("--tprime " + std::to_string(*f.tprime) + " conflicts with --n " + std::to_string(n) +
                         " and --r " + std::to_string(r) + ": " + e.what());
      }
    }
  } else if (f.k) {
    c.micro_actions = *f.k;
  }
  if (f.lambda1) c.lambda_verb = *f.lambda1;
  if (f.lambda2) c.lambda_object = *f.lambda2;
  if (f.lambda3) c.lambda_ant = *f.lambda3;
  if (f.pose_only) c.pose_only = true;
  if (f.no_tokenizer) c.use_tokenizer = false;
  if (f.tokenizer) c.use_tokenizer = true;
  if (f.wrist_relative) c.wrist_relative = true;
  if (f.joint_embeddings) c.joint_identity_embeddings = true;
  try {
    c.validate();
  } catch (const Error& e) {
    throw UsageError(std::string("invalid model configuration: ") + e.what());
  }
  return c;
}

void log_config(std::ostream& out, const model::ModelConfig& c, std::uint64_t seed) {
  Line(out, "config")("seed", std::to_string(seed))("d", c.d)("tn", c.layers)("dt", c.token_dim)(
      "joints", c.joints)("n", c.frames_per_action)("r", c.stride)("k", c.micro_actions)(
      "tprime", c.total_frames())("feature_dim", c.feature_dim)("pose_only", c.pose_only ? 1 : 0)(
      "tokenizer", c.tokenizer_active() ? 1 : 0)("lambda1", c.lambda_verb)("lambda2", c.lambda_object)(
      "lambda3", c.lambda_ant);
}

std::size_t dataset_feature_dim(const pose::Dataset& data) {
  for (const auto& s : data.samples) {
    if (!s.frame_features.empty()) return s.frame_features.begin()->second.size();
  }
  fail(ErrorCode::kMissingFeature, "dataset has no frame features; train with --pose-only");
}

void add_seed(CLI::App* app, std::uint64_t& seed) {
  app->add_option("--seed", seed, "Seed for every random choice")->envname("HANDFORMER_SEED")->capture_default_str();
}

void add_threads(CLI::App* app, std::size_t& threads) {
  app->add_option("--threads", threads, "Worker thread cap")->check(CLI::PositiveNumber)->capture_default_str();
}

// ---------------------------------------------------------------- gen-data

struct GenDataArgs {
  pose::SyntheticSpec spec;
  fs::path out;
  std::size_t threads = 1;
};

int gen_data(const GenDataArgs& a, std::ostream& out) {
  if (a.spec.verbs == 0 || a.spec.objects == 0 || a.spec.per_class == 0) {
    throw UsageError("--verbs, --objects and --per-class must be positive");
  }
  const pose::Dataset data = pose::generate_synthetic_dataset(a.spec, a.threads);
  pose::save_dataset(data, a.out);
  Line(out, "gen-data")("samples", data.samples.size())("verbs", a.spec.verbs)("objects", a.spec.objects)(
      "seed", std::to_string(a.spec.seed))("out", a.out.string());
  return kExitOk;
}

// ---------------------------------------------------------------- train

struct TrainArgs {
  ModelFlags model;
  fs::path data, out;
  std::optional<fs::path> init_traj;
  std::size_t epochs = 50;
  std::size_t batch = 32;
  double lr = 0.025;
  double held_out = 0.2;
  std::uint64_t seed = kDefaultSeed;
  std::size_t threads = 1;
};

struct PreparedData {
  std::vector<train::PreparedSample> train, held_out;
};

PreparedData prepare_split(const pose::Dataset& data, const model::ModelConfig& cfg, double fraction,
                           std::uint64_t seed, std::size_t threads) {
  const auto provider = features::FrameFeatureProvider::from_files();
  auto prepared = train::prepare_samples(data.samples, cfg, cfg.multimodal() ? &provider : nullptr, threads);
  std::vector<std::size_t> actions;
  for (const auto& p : prepared) actions.push_back(p.labels.action);
  const train::Split split = train::stratified_split(actions, fraction, seed);
  PreparedData out;
  for (std::size_t i : split.train) out.train.push_back(std::move(prepared[i]));
  for (std::size_t i : split.held_out) out.held_out.push_back(std::move(prepared[i]));
  return out;
}

int run_training(const TrainArgs& a, train::TrainMode mode, std::ostream& out) {
  if (a.held_out < 0 || a.held_out >= 1) throw UsageError("--held-out must lie in [0, 1)");
  model::ModelConfig cfg = train::effective_config(resolve_model(a.model, a.model.preset), mode);
  const pose::Dataset data = pose::load_dataset(a.data);
  cfg.verbs = data.label_space.verbs;
  cfg.objects = data.label_space.objects;
  if (cfg.multimodal()) cfg.feature_dim = dataset_feature_dim(data);
  log_config(out, cfg, a.seed);
  const PreparedData split = prepare_split(data, cfg, a.held_out, a.seed, a.threads);
  Line(out, "data")("train", split.train.size())("held_out", split.held_out.size());

  model::HandFormer<float> net(cfg, a.seed);
  train::TrainOptions opt;
  opt.mode = mode;
  opt.epochs = a.epochs;
  opt.batch_size = a.batch;
  opt.lr = a.lr;
  opt.seed = a.seed;
  opt.init_trajectory = a.init_traj;
  const train::TrainResult result =
      train::train_model(net, split.train, split.held_out, opt, [&](const train::EpochMetrics& m) {
        // Losses print round-trip exact so reruns can be compared bitwise.
        Line(out, "epoch")("epoch", m.epoch)("l_cls", m.loss.l_cls, "%.17g")("l_verb", m.loss.l_verb, "%.17g")(
            "l_obj", m.loss.l_obj, "%.17g")("l_ant", m.loss.l_ant, "%.17g")("total", m.loss.total, "%.17g")(
            "action_acc", m.eval.action_acc, "%.4f")("verb_acc", m.eval.verb_acc, "%.4f")(
            "object_acc", m.eval.object_acc, "%.4f");
      });

  fs::create_directories(a.out);
  auto meta = train::config_meta(cfg);
  meta["split.seed"] = std::to_string(a.seed);
  char fraction[32];
  std::snprintf(fraction, sizeof fraction, "%.17g", a.held_out);
  meta["split.held_out"] = fraction;
  meta["train.mode"] = mode == train::TrainMode::kPosePretrain ? "pretrain-traj" : "train";
  meta["train.epochs"] = std::to_string(a.epochs);
  const fs::path ckpt = a.out / "checkpoint.hfck";
  train::save_checkpoint(train::make_checkpoint(net.parameters(), &result.optimizer, meta), ckpt);
  train::write_metrics_csv(result.history, a.out / "metrics.csv");
  Line(out, "done")("best_verb_acc", result.best.verb_acc, "%.4f")("best_object_acc", result.best.object_acc, "%.4f")(
      "best_action_acc", result.best.action_acc, "%.4f")("best_verb_epoch", result.best_verb_epoch)(
      "checkpoint", ckpt.string());
  return kExitOk;
}

// ---------------------------------------------------------------- eval

struct EvalArgs {
  fs::path checkpoint, data;
  std::string split = "held-out";
  std::size_t threads = 1;
};

std::uint64_t meta_seed(const std::map<std::string, std::string>& meta) {
  const auto it = meta.find("split.seed");
  return it == meta.end() ? kDefaultSeed : std::stoull(it->second);
}

double meta_fraction(const std::map<std::string, std::string>& meta) {
  const auto it = meta.find("split.held_out");
  return it == meta.end() ? 0.2 : std::stod(it->second);
}

int run_eval(const EvalArgs& a, std::ostream& out) {
  const train::Checkpoint ckpt = train::read_checkpoint(a.checkpoint);
  const model::ModelConfig cfg = train::config_from_meta(ckpt.meta);
  model::HandFormer<float> net(cfg, 0);
  train::load_parameters(ckpt, net.parameters());
  const pose::Dataset data = pose::load_dataset(a.data);
  require(data.label_space.verbs == cfg.verbs && data.label_space.objects == cfg.objects,
          ErrorCode::kExtentMismatch, "dataset label space does not match the checkpoint");
  const std::uint64_t seed = meta_seed(ckpt.meta);
  const PreparedData split =
      prepare_split(data, cfg, a.split == "all" ? 0.0 : meta_fraction(ckpt.meta), seed, a.threads);
  const auto& samples = a.split == "all" ? split.train : split.held_out;
  const train::EvalReport r = train::evaluate(net, samples);
  Line(out, "eval")("split", a.split)("samples", r.samples)("action_acc", r.action_acc, "%.4f")(
      "verb_acc", r.verb_acc, "%.4f")("object_acc", r.object_acc, "%.4f")(
      "pair_action_acc", r.pair_action_acc, "%.4f");
  return kExitOk;
}

// ---------------------------------------------------------------- gradcheck

struct GradcheckArgs {
  ModelFlags model;
  std::uint64_t seed = kDefaultSeed;
  std::size_t batch = 2;
  std::size_t per_tensor = 0;
  double eps = 1e-5;
};

int run_gradcheck(const GradcheckArgs& a, std::ostream& out) {
  // The named preset is the d=8, T_n=1, K=2, J=2, N=4 check model.
  model::ModelConfig cfg = resolve_model(a.model, "gradcheck");
  log_config(out, cfg, a.seed);
  const nn::GradCheckReport report = train::check_model_gradients(cfg, a.seed, a.batch, a.per_tensor, a.eps);
  for (const auto& e : report.entries) {
    Line(out, "gradcheck")("parameter", e.name)("checked", e.count)("max_rel_err", e.max_rel_error, "%.3e");
  }
  Line(out, "summary")("max_rel_err", report.max_rel_error, "%.3e")("tolerance", report.tolerance, "%g")(
      "evaluations", report.evaluations)("passed", report.passed() ? 1 : 0);
  return report.passed() ? kExitOk : kExitNumerical;
}

// ---------------------------------------------------------------- flops

struct FlopsArgs {
  ModelFlags model;
  std::string table = "model";
  std::optional<fs::path> out;
};

int run_flops(const FlopsArgs& a, const CLI::App* app, std::ostream& out) {
  train::FlopsLedger ledger;
  if (a.table == "model") {
    const model::ModelConfig cfg = resolve_model(a.model, a.model.preset);
    log_config(out, cfg, kDefaultSeed);
    ledger = train::count_model_flops(cfg);
  } else {
    std::string flag;
    if (any_model_flag(app, &flag)) throw UsageError(flag + " conflicts with --table " + a.table);
    ledger = a.table == "paper" ? train::paper_flops_table() : train::tsm_flops_table();
  }
  for (const auto& e : ledger.entries) {
    Line(out, "flops")("component", e.component)("gflops", e.gflops, "%.6g")("count", e.count, "%g")(
        "total", e.total(), "%.6g");
  }
  Line(out, "total")("method", ledger.method)("gflops", ledger.total(), "%.2f");
  if (a.out) pose::write_text_file(*a.out, train::format_ledger(ledger));
  return kExitOk;
}

// ---------------------------------------------------------------- analyze

struct AnalyzeArgs {
  std::optional<fs::path> data;
  std::optional<std::string> synthetic;
  std::size_t clips = 100;
  std::size_t sample = 0;
  std::size_t frames = 120;
  std::uint64_t seed = kDefaultSeed;
  std::optional<fs::path> out;
  std::size_t threads = 1;
};

std::vector<analysis::SkeletonClip> load_clips(const fs::path& dir) {
  std::vector<std::pair<std::string, pose::PoseSequence>> sequences;
  if (fs::exists(dir / "dataset.txt")) {
    for (auto& s : pose::load_dataset(dir).samples) sequences.emplace_back(s.id, std::move(s.pose));
  } else {
    require(fs::is_directory(dir), ErrorCode::kIo, "not a directory: " + dir.string());
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
      if (entry.path().extension() == ".pose") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) sequences.emplace_back(f.stem().string(), pose::load_pose_sequence(f));
  }
  std::vector<analysis::SkeletonClip> clips;
  for (const auto& [id, raw] : sequences) {
    const pose::PoseSequence seq = pose::fill_missing_hands(raw);
    for (std::size_t h = 0; h < pose::kHands; ++h) {
      if (seq.hand_observed[h]) clips.push_back(analysis::clip_from_hand(seq, h, id + (h == 0 ? ".left" : ".right")));
    }
  }
  require(!clips.empty(), ErrorCode::kExtentMismatch, "no pose clips found in " + dir.string());
  return clips;
}

int run_analyze(const AnalyzeArgs& a, std::ostream& out) {
  if (!a.data && !a.synthetic) throw UsageError("analyze needs --data or --synthetic");
  std::vector<analysis::SkeletonClip> clips;
  if (a.data) {
    clips = load_clips(*a.data);
  } else {
    if (a.clips == 0) throw UsageError("--clips must be positive");
    for (std::size_t i = 0; i < a.clips; ++i) {
      const std::uint64_t s = derive_seed(a.seed, i);
      clips.push_back(*a.synthetic == "hand" ? analysis::synthetic_hand_clip(s, a.frames)
                                             : analysis::synthetic_body_clip(s, a.frames));
    }
  }
  if (a.sample > 0) {
    std::vector<analysis::SkeletonClip> picked;
    for (std::size_t i : analysis::seeded_sample(clips.size(), a.sample, a.seed)) picked.push_back(clips[i]);
    clips = std::move(picked);
  }
  const auto profiles = analysis::activity_profiles(clips, a.threads);
  double sum = 0, lo = 1, hi = -1;
  for (const auto& p : profiles) {
    Line(out, "clip")("clip_id", p.clip_id)("j_sta", p.j_sta)("j_dyn", p.j_dyn)("r", p.r, "%.6f")(
        "diameter", p.diameter, "%.6g");
    sum += p.r;
    lo = std::min(lo, p.r);
    hi = std::max(hi, p.r);
  }
  if (a.out) {
    fs::create_directories(*a.out);
    analysis::export_profile_csv(profiles, *a.out / "profiles.csv");
    analysis::export_summary_csv(profiles, *a.out / "summary.csv");
  }
  Line(out, "summary")("clips", profiles.size())("mean_r", sum / static_cast<double>(profiles.size()), "%.6f")(
      "min_r", lo, "%.6f")("max_r", hi, "%.6f");
  return kExitOk;
}

// ---------------------------------------------------------------- validate

int run_validate(const fs::path& dir, std::ostream& out) {
  const pose::Dataset data = pose::load_dataset(dir);
  std::optional<std::size_t> dim;
  std::size_t min_frames = 0, max_frames = 0, with_features = 0;
  for (const auto& s : data.samples) {
    min_frames = min_frames == 0 ? s.pose.frames() : std::min(min_frames, s.pose.frames());
    max_frames = std::max(max_frames, s.pose.frames());
    for (const auto* map : {&s.frame_features, &s.crop_features}) {
      for (const auto& [frame, v] : *map) {
        if (!dim) dim = v.size();
        require(v.size() == *dim, ErrorCode::kExtentMismatch,
                "sample " + s.id + " frame " + std::to_string(frame) + " has feature dimension " +
                    std::to_string(v.size()) + ", expected " + std::to_string(*dim));
        require(frame < s.pose.frames(), ErrorCode::kExtentMismatch,
                "sample " + s.id + " has a feature for frame " + std::to_string(frame) + " beyond its " +
                    std::to_string(s.pose.frames()) + " frames");
      }
    }
    if (!s.frame_features.empty()) ++with_features;
  }
  Line(out, "valid")("samples", data.samples.size())("verbs", data.label_space.verbs)(
      "objects", data.label_space.objects)("min_frames", min_frames)("max_frames", max_frames)(
      "feature_dim", dim.value_or(0))("with_features", with_features);
  return kExitOk;
}

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::kNumerical:
      return kExitNumerical;
    case ErrorCode::kInvalidArgument:
    case ErrorCode::kIncompatibleFactorization:
      return kExitUsage;
    default:
      return kExitData;
  }
}

}  // namespace

int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Hand-pose and frame-feature action recognition", "handformer"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "List every subcommand and flag");

  GenDataArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "Write a synthetic dataset");
  gen_cmd->add_option("--verbs", gen.spec.verbs, "Verb classes")->capture_default_str();
  gen_cmd->add_option("--objects", gen.spec.objects, "Object classes")->capture_default_str();
  gen_cmd->add_option("--per-class", gen.spec.per_class, "Samples per (verb, object) class")->capture_default_str();
  gen_cmd->add_option("--noise", gen.spec.noise, "Pose noise level")->check(CLI::NonNegativeNumber)->capture_default_str();
  gen_cmd->add_option("--frames", gen.spec.frames, "Frames per sample")->check(CLI::PositiveNumber)->capture_default_str();
  gen_cmd->add_option("--feature-dim", gen.spec.feature_dim, "Frame feature width d_f")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  gen_cmd->add_option("--out", gen.out, "Output directory")->required();
  add_seed(gen_cmd, gen.spec.seed);
  add_threads(gen_cmd, gen.threads);

  TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train", "Train the model on a dataset directory");
  TrainArgs pre;
  auto* pre_cmd = app.add_subcommand("pretrain-traj", "Pretrain the trajectory encoder on verbs from poses alone");
  for (auto [cmd, a] : {std::pair{train_cmd, &tr}, std::pair{pre_cmd, &pre}}) {
    cmd->add_option("--data", a->data, "Dataset directory")->required();
    cmd->add_option("--out", a->out, "Output directory for checkpoint.hfck and metrics.csv")->required();
    cmd->add_option("--epochs", a->epochs, "Training epochs")->capture_default_str();
    cmd->add_option("--batch", a->batch, "Batch size")->check(CLI::PositiveNumber)->capture_default_str();
    cmd->add_option("--lr", a->lr, "Initial learning rate")->check(CLI::PositiveNumber)->capture_default_str();
    cmd->add_option("--held-out", a->held_out, "Held-out fraction per action")->capture_default_str();
    add_seed(cmd, a->seed);
    add_threads(cmd, a->threads);
    add_model_flags(cmd, a->model, {"tiny", "B", "L"}, cmd == train_cmd);
  }
  train_cmd->add_option("--init-traj", tr.init_traj, "Pretrained checkpoint for the trajectory encoder")
      ->check(CLI::ExistingFile);

  EvalArgs ev;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint");
  eval_cmd->add_option("--checkpoint", ev.checkpoint, "Checkpoint file")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--data", ev.data, "Dataset directory")->required();
  eval_cmd->add_option("--split", ev.split, "Samples to score")
      ->check(CLI::IsMember({"held-out", "all"}))
      ->capture_default_str();
  add_threads(eval_cmd, ev.threads);

  GradcheckArgs gc;
  auto* gc_cmd = app.add_subcommand("gradcheck", "Finite-difference check of the full model in double precision");
  add_model_flags(gc_cmd, gc.model, {"tiny"});
  add_seed(gc_cmd, gc.seed);
  gc_cmd->add_option("--batch", gc.batch, "Random batch size")->check(CLI::PositiveNumber)->capture_default_str();
  gc_cmd->add_option("--per-tensor", gc.per_tensor, "Entries checked per tensor, 0 for all")->capture_default_str();
  gc_cmd->add_option("--eps", gc.eps, "Central-difference step")->check(CLI::PositiveNumber)->capture_default_str();

  FlopsArgs fl;
  auto* flops_cmd = app.add_subcommand("flops", "Print a FLOPs ledger");
  flops_cmd->add_option("--table", fl.table, "paper, tsm, or the analytical count of a model configuration")
      ->check(CLI::IsMember({"paper", "tsm", "model"}))
      ->capture_default_str();
  flops_cmd->add_option("--out", fl.out, "Also write the ledger as CSV");
  add_model_flags(flops_cmd, fl.model, {"tiny", "B", "L"});

  AnalyzeArgs an;
  auto* an_cmd = app.add_subcommand("analyze", "Joint activity statistics");
  auto* an_data = an_cmd->add_option("--data", an.data, "Dataset directory or directory of .pose files");
  auto* an_syn = an_cmd->add_option("--synthetic", an.synthetic, "Generate hand or body clips instead")
                     ->check(CLI::IsMember({"hand", "body"}));
  an_data->excludes(an_syn);
  an_cmd->add_option("--clips", an.clips, "Synthetic clip count")->capture_default_str();
  an_cmd->add_option("--frames", an.frames, "Synthetic clip length")->check(CLI::Range(2, 100000))->capture_default_str();
  an_cmd->add_option("--sample", an.sample, "Seeded subsample size, 0 for all clips")->capture_default_str();
  an_cmd->add_option("--out", an.out, "Directory for profiles.csv and summary.csv");
  add_seed(an_cmd, an.seed);
  add_threads(an_cmd, an.threads);

  fs::path validate_dir;
  auto* val_cmd = app.add_subcommand("validate", "Load a dataset directory and check every file");
  val_cmd->add_option("--data", validate_dir, "Dataset directory")->required();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    const auto subs = app.get_subcommands();
    out << (subs.empty() ? app.help("", CLI::AppFormatMode::All) : subs.front()->help());
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n" << "Run with --help for usage.\n";
    return kExitUsage;
  }

  try {
    if (gen_cmd->parsed()) return gen_data(gen, out);
    if (train_cmd->parsed()) return run_training(tr, train::TrainMode::kMultimodal, out);
    if (pre_cmd->parsed()) return run_training(pre, train::TrainMode::kPosePretrain, out);
    if (eval_cmd->parsed()) return run_eval(ev, out);
    if (gc_cmd->parsed()) return run_gradcheck(gc, out);
    if (flops_cmd->parsed()) return run_flops(fl, flops_cmd, out);
    if (an_cmd->parsed()) return run_analyze(an, out);
    if (val_cmd->parsed()) return run_validate(validate_dir, out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const Error& e) {
    err << "error: " << error_code_name(e.code()) << ": " << e.what() << "\n";
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitUsage;
}

}  // namespace handformer::cli
