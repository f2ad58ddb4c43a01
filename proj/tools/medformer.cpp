// medformer: train / eval / infer / bench / inspect workflows over the
// library. Exit codes: 0 ok, 1 runtime failure, 2 usage error.

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "medformer/bench.hpp"
#include "medformer/data.hpp"
#include "medformer/mft.hpp"
#include "medformer/model.hpp"
#include "medformer/trainer.hpp"

namespace fs = std::filesystem;
using namespace mf;

namespace {

std::string read_text_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ValueError("cannot open '" + path + "'");
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream f(path);
  if (!f) throw ValueError("cannot write '" + path + "'");
  f << text;
}

// Default tiny configuration; overridable via --model-config.
ModelConfig default_model_config() {
  ModelConfig c;
  c.base_width = 16;
  c.widths = {32, 48, 64};
  c.blocks = {1, 1, 1};
  c.heads = {4, 4, 4};
  c.sem_h = 4;
  c.sem_w = 4;
  c.fuse_blocks = 1;
  c.fuse_heads = 4;
  return c;
}

std::vector<SegSample> load_split(const std::string& dir, const std::string& split) {
  auto all = load_dataset(dir);
  std::vector<SegSample> out;
  for (auto& s : all)
    if (split.empty() || s.split == split) out.push_back(std::move(s));
  return out;
}

// Plain (P2) grayscale rendering, values scaled to the map maximum.
void write_pgm(const std::string& path, const float* data, std::size_t H, std::size_t W) {
  float mx = 0;
  for (std::size_t i = 0; i < H * W; ++i) mx = std::max(mx, data[i]);
  std::ofstream f(path);
  if (!f) throw ValueError("cannot write '" + path + "'");
  f << "P2\n" << W << " " << H << "\n255\n";
  for (std::size_t y = 0; y < H; ++y) {
    for (std::size_t x = 0; x < W; ++x)
      f << static_cast<int>(mx > 0 ? 255.0f * data[y * W + x] / mx : 0.0f)
        << (x + 1 < W ? ' ' : '\n');
  }
}

int cmd_train(const std::string& config_path, const std::string& model_config_path,
              const std::string& data_dir, const std::string& out_dir, std::uint64_t seed) {
  TrainConfig tc;
  if (!config_path.empty()) tc = train_config_from_text(read_text_file(config_path));
  tc.seed = seed;
  tc.out_dir = out_dir;
  // The file holds overrides; unlisted keys keep the default tiny config.
  ModelConfig mc = default_model_config();
  if (!model_config_path.empty()) {
    auto kv = parse_kv(config_to_text(mc));
    for (auto& [k, v] : parse_kv(read_text_file(model_config_path))) {
      if (!kv.count(k)) throw ValueError("model config: unknown key '" + k + "'");
      kv[k] = v;
    }
    std::ostringstream merged;
    for (auto& [k, v] : kv) merged << k << "=" << v << "\n";
    mc = config_from_text(merged.str());
  }
  auto train_set = load_split(data_dir, "train");
  auto val_set = load_split(data_dir, "val");
  if (train_set.empty()) throw ValueError("no training cases in '" + data_dir + "'");
  auto model = Model<float>::build(mc, seed);
  std::cout << "training: " << train_set.size() << " cases, " << val_set.size()
            << " validation cases, " << model.parameter_count() << " parameters\n";
  auto res = train(model, train_set, val_set, tc);
  for (const auto& e : res.epochs)
    std::cout << "epoch " << e.epoch << " loss " << e.loss << " val_dsc " << e.val_dsc << "\n";
  if (res.aborted) {
    std::cerr << "aborted: " << res.abort_reason << "\n";
    return 1;
  }
  std::cout << "best val dsc " << res.best_val_dsc << "\n";
  return 0;
}

int cmd_eval(const std::string& ckpt, const std::string& data_dir, const std::string& out_dir,
             const std::string& split, std::size_t window_h, std::size_t window_w) {
  auto model = Model<float>::load_checkpoint(ckpt);
  auto cases = load_split(data_dir, split);
  if (cases.empty()) throw ValueError("no cases with split '" + split + "' in '" + data_dir + "'");
  auto res = evaluate(model, cases, window_h, window_w);
  fs::create_directories(out_dir);
  std::ostringstream csv;
  csv.precision(17);
  csv << res.to_csv();
  csv << "mean,all," << res.mean_dsc << ",\n";
  write_text_file((fs::path(out_dir) / "metrics.csv").string(), csv.str());
  std::cout << "cases " << cases.size() << " mean_dsc " << res.mean_dsc << "\n";
  return 0;
}

int cmd_infer(const std::string& ckpt, const std::string& image_path, const std::string& out_dir,
              std::size_t window_h, std::size_t window_w) {
  auto model = Model<float>::load_checkpoint(ckpt);
  auto image = read_mft<float>(image_path);
  const std::size_t H = image.dim(1), W = image.dim(2);
  const std::size_t wh = window_h ? window_h : H, ww = window_w ? window_w : W;
  auto fwd = [&](const Tensor<float>& p) { return model.forward(p).logits; };
  auto probs = sliding_window_infer(fwd, image, wh, ww);
  const std::size_t C = probs.dim(0);
  std::vector<std::uint8_t> pred(H * W);
  for (std::size_t i = 0; i < H * W; ++i) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < C; ++c)
      if (probs[c * H * W + i] > probs[best * H * W + i]) best = c;
    pred[i] = static_cast<std::uint8_t>(best);
  }
  fs::create_directories(out_dir);
  write_mft((fs::path(out_dir) / "probs.mft").string(), probs);
  write_mft((fs::path(out_dir) / "pred.mft").string(), pred, Shape{H, W});
  std::cout << "wrote " << (fs::path(out_dir) / "pred.mft").string() << "\n";
  return 0;
}

int cmd_synth(const std::string& task, const std::string& out_dir, std::size_t n_train,
              std::size_t n_val, std::size_t H, std::size_t W, std::size_t classes,
              std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<SegSample> samples;
  if (task == "shapes")
    samples = synth_task(rng, n_train + n_val, H, W, classes);
  else if (task == "context")
    samples = synth_context_task(rng, n_train + n_val, H, W, classes);
  else
    throw ValueError("synth: unknown task '" + task + "' (shapes|context)");
  for (std::size_t i = 0; i < samples.size(); ++i) {
    samples[i] = normalize_intensity(samples[i]);
    samples[i].split = i < n_train ? "train" : "val";
  }
  save_dataset(out_dir, samples);
  std::cout << "wrote " << n_train << " train + " << n_val << " val cases to " << out_dir << "\n";
  return 0;
}

int cmd_bench(const std::string& variant, const std::string& sweep, std::size_t d,
              const std::string& out_path) {
  std::vector<std::size_t> sides;
  std::stringstream ss(sweep);
  std::string tok;
  while (std::getline(ss, tok, ',')) sides.push_back(std::stoul(tok));
  if (sides.empty()) throw ValueError("bench: empty sweep");
  std::vector<BenchVariant> variants;
  if (variant == "all")
    variants = {BenchVariant::conv, BenchVariant::mhsa, BenchVariant::window, BenchVariant::bmha};
  else
    variants = {bench_variant_from(variant)};
  std::vector<BenchRow> rows;
  for (auto v : variants)
    for (auto s : sides) rows.push_back(bench_one(v, s, s, d, 3, 4, 4, 4));
  auto csv = bench_report(rows);
  if (!out_path.empty())
    write_text_file(out_path, csv);
  else
    std::cout << csv;
  for (auto v : variants) {
    auto fit = linearity_fit(sweep_macs(v, sides, d, 3, 4, 4, 4));
    std::cout << to_string(v) << " slope " << fit.slope << " r2 " << fit.r2 << "\n";
  }
  return 0;
}

int cmd_inspect_attn(const std::string& ckpt, const std::string& case_path, int level,
                     int token, const std::string& out_dir) {
  auto model = Model<float>::load_checkpoint(ckpt);
  if (model.config().variant != AttnVariant::bmha)
    throw ValueError("inspect-attn requires a bidirectional-attention checkpoint");
  auto image = read_mft<float>(case_path);
  ModelTrace<float> trace;
  model.forward(image, &trace);
  if (level < 0 || level > 2) throw ValueError("level must be 0, 1 or 2");
  const auto& w = trace.encoder[level].m_weights;  // l x n, rows sum to 1
  const std::size_t l = w.dim(0), n = w.dim(1);
  if (token < 0 || static_cast<std::size_t>(token) >= l)
    throw ValueError("token must be in [0, " + std::to_string(l) + ")");
  const std::size_t H = image.dim(1) >> (2 + level), W = image.dim(2) >> (2 + level);
  check(H * W == n, "trace extent mismatch");
  Tensor<float> map(Shape{H, W});
  double sum = 0;
  for (std::size_t i = 0; i < n; ++i) {
    map[i] = w[static_cast<std::size_t>(token) * n + i];
    sum += map[i];
  }
  check(std::abs(sum - 1.0) < 1e-5, "attention row is not normalized");
  fs::create_directories(out_dir);
  write_mft((fs::path(out_dir) / "attention.mft").string(), map);
  write_pgm((fs::path(out_dir) / "attention.pgm").string(), map.data(), H, W);
  std::cout << "wrote " << (fs::path(out_dir) / "attention.mft").string() << "\n";
  return 0;
}

int cmd_inspect_cosine(const std::string& ckpt, const std::string& case_path, int level,
                       const std::string& out_dir) {
  auto model = Model<float>::load_checkpoint(ckpt);
  if (model.config().variant != AttnVariant::bmha)
    throw ValueError("inspect-cosine requires a bidirectional-attention checkpoint");
  auto image = read_mft<float>(case_path);
  auto out = model.forward(image);
  if (level < 0 || static_cast<std::size_t>(level) >= out.semantic_maps.size())
    throw ValueError("level must be 0, 1 or 2");
  auto sim = token_cosine_similarity(out.semantic_maps[level].detached());
  const std::size_t l = sim.dim(0);
  std::ostringstream csv;
  csv.precision(9);
  for (std::size_t a = 0; a < l; ++a)
    for (std::size_t b = 0; b < l; ++b) csv << sim[a * l + b] << (b + 1 < l ? ',' : '\n');
  fs::create_directories(out_dir);
  write_text_file((fs::path(out_dir) / "cosine.csv").string(), csv.str());
  std::cout << "wrote " << (fs::path(out_dir) / "cosine.csv").string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"MedFormer-style segmentation toolkit"};
  app.require_subcommand(1);

  std::string config, model_config, data_dir, out_dir, ckpt, image_path, split = "val";
  std::string variant = "all", sweep = "8,12,16,24,32,48,64", bench_out;
  std::uint64_t seed = 0;
  std::size_t window_h = 0, window_w = 0, bench_d = 8;
  std::size_t n_train = 32, n_val = 8, synth_h = 64, synth_w = 64, classes = 2;
  std::string task = "shapes";
  int level = 2, token = 0;

  auto* sy = app.add_subcommand("synth", "generate a seeded synthetic segmentation dataset");
  sy->add_option("--task", task, "shapes (local intensity cues) or context (corner legend)");
  sy->add_option("--out", out_dir, "dataset output directory")->required();
  sy->add_option("--train", n_train, "number of training cases");
  sy->add_option("--val", n_val, "number of validation cases");
  sy->add_option("--height", synth_h, "image height");
  sy->add_option("--width", synth_w, "image width");
  sy->add_option("--classes", classes, "number of classes incl. background");
  sy->add_option("--seed", seed, "rng seed");

  auto* t = app.add_subcommand("train", "train a model on a dataset directory");
  t->add_option("--config", config, "training config file (key=value)");
  t->add_option("--model-config", model_config, "model config file (key=value)");
  t->add_option("--data", data_dir, "dataset directory")->required();
  t->add_option("--out", out_dir, "run output directory")->required();
  t->add_option("--seed", seed, "rng seed");

  auto* e = app.add_subcommand("eval", "evaluate a checkpoint with sliding-window inference");
  e->add_option("--checkpoint", ckpt, "checkpoint path")->required();
  e->add_option("--data", data_dir, "dataset directory")->required();
  e->add_option("--out", out_dir, "output directory")->required();
  e->add_option("--split", split, "manifest split to evaluate (default val)");
  e->add_option("--window-h", window_h, "window height (0: full image)");
  e->add_option("--window-w", window_w, "window width (0: full image)");

  auto* i = app.add_subcommand("infer", "predict one image");
  i->add_option("--checkpoint", ckpt, "checkpoint path")->required();
  i->add_option("--image", image_path, "input image (.mft, CxHxW f32)")->required();
  i->add_option("--out", out_dir, "output directory")->required();
  i->add_option("--window-h", window_h, "window height (0: full image)");
  i->add_option("--window-w", window_w, "window width (0: full image)");

  auto* b = app.add_subcommand("bench", "MAC counting and complexity fits");
  b->add_option("--variant", variant, "conv|mhsa|window|bmha|all");
  b->add_option("--sweep", sweep, "comma-separated square side lengths");
  b->add_option("--width", bench_d, "channel width d");
  b->add_option("--out", bench_out, "CSV output path (default stdout)");

  auto* ia = app.add_subcommand("inspect-attn",
                                "export one semantic token's attention map (MFT + PGM)");
  ia->add_option("--checkpoint", ckpt, "checkpoint path")->required();
  ia->add_option("--case", image_path, "input image (.mft)")->required();
  ia->add_option("--level", level, "encoder level 0..2");
  ia->add_option("--token", token, "semantic token index");
  ia->add_option("--out", out_dir, "output directory")->required();

  auto* ic = app.add_subcommand("inspect-cosine", "export semantic token |cosine| matrix (CSV)");
  ic->add_option("--checkpoint", ckpt, "checkpoint path")->required();
  ic->add_option("--case", image_path, "input image (.mft)")->required();
  ic->add_option("--level", level, "encoder level 0..2");
  ic->add_option("--out", out_dir, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int rc = app.exit(err);
    return rc == 0 ? 0 : 2;  // usage errors exit 2; --help exits 0
  }

  try {
    if (sy->parsed()) return cmd_synth(task, out_dir, n_train, n_val, synth_h, synth_w, classes, seed);
    if (t->parsed()) return cmd_train(config, model_config, data_dir, out_dir, seed);
    if (e->parsed()) return cmd_eval(ckpt, data_dir, out_dir, split, window_h, window_w);
    if (i->parsed()) return cmd_infer(ckpt, image_path, out_dir, window_h, window_w);
    if (b->parsed()) return cmd_bench(variant, sweep, bench_d, bench_out);
    if (ia->parsed()) return cmd_inspect_attn(ckpt, image_path, level, token, out_dir);
    if (ic->parsed()) return cmd_inspect_cosine(ckpt, image_path, level, out_dir);
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return 1;
  }
  return 2;
}
