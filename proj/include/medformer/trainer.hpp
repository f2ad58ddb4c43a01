#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "medformer/data.hpp"
#include "medformer/losses.hpp"
#include "medformer/metrics.hpp"
#include "medformer/model.hpp"
#include "medformer/optim.hpp"

namespace mf {

inline const char* version_string() { return "medformer-0.1.0"; }

struct TrainConfig {
  int epochs = 30;
  double lr0 = 1e-3;
  double gamma = 0.893;  // ~30x decay over 30 epochs
  double weight_decay = 1e-2;
  double clip_norm = 1.0;
  std::uint64_t seed = 0;
  bool augment = false;
  int val_every = 1;
  double stop_at_dsc = 0.0;    // 0 disables early stopping
  std::size_t window_h = 0, window_w = 0;  // 0: full-image validation forward
  std::string out_dir;         // empty: no artifacts written
};

inline std::string train_config_to_text(const TrainConfig& c) {
  std::ostringstream os;
  os.precision(17);
  os << "epochs=" << c.epochs << "\nlr0=" << c.lr0 << "\ngamma=" << c.gamma
     << "\nweight_decay=" << c.weight_decay << "\nclip_norm=" << c.clip_norm
     << "\nseed=" << c.seed << "\naugment=" << (c.augment ? 1 : 0)
     << "\nval_every=" << c.val_every << "\nstop_at_dsc=" << c.stop_at_dsc
     << "\nwindow_h=" << c.window_h << "\nwindow_w=" << c.window_w << "\n";
  return os.str();
}

inline TrainConfig train_config_from_text(const std::string& text) {
  auto kv = parse_kv(text);
  TrainConfig c;
  auto opt = [&](const std::string& k, auto parse, auto& field) {
    auto it = kv.find(k);
    if (it != kv.end()) field = parse(it->second);
  };
  auto to_i = [](const std::string& s) { return std::stoi(s); };
  auto to_d = [](const std::string& s) { return std::stod(s); };
  auto to_u = [](const std::string& s) { return std::stoull(s); };
  auto to_z = [](const std::string& s) { return static_cast<std::size_t>(std::stoull(s)); };
  opt("epochs", to_i, c.epochs);
  opt("lr0", to_d, c.lr0);
  opt("gamma", to_d, c.gamma);
  opt("weight_decay", to_d, c.weight_decay);
  opt("clip_norm", to_d, c.clip_norm);
  opt("seed", to_u, c.seed);
  int aug = c.augment ? 1 : 0;
  opt("augment", to_i, aug);
  c.augment = aug != 0;
  opt("val_every", to_i, c.val_every);
  opt("stop_at_dsc", to_d, c.stop_at_dsc);
  opt("window_h", to_z, c.window_h);
  opt("window_w", to_z, c.window_w);
  return c;
}

struct CaseMetrics {
  std::string id;
  int cls = 0;
  double dsc_value = 0.0;
  double hd95_value = 0.0;
};

struct EvalResult {
  std::vector<CaseMetrics> records;
  double mean_dsc = 0.0;  // over foreground classes and cases

  std::string to_csv() const {
    std::ostringstream os;
    os.precision(17);
    os << "case,class,dsc,hd95\n";
    for (const auto& r : records)
      os << r.id << "," << r.cls << "," << r.dsc_value << "," << r.hd95_value << "\n";
    return os.str();
  }
};

// Sliding-window evaluation; window 0 means one full-image placement.
template <class M>
EvalResult evaluate(const M& model, const std::vector<SegSample>& samples,
                    std::size_t window_h = 0, std::size_t window_w = 0) {
  const std::size_t C = model.config().num_classes;
  EvalResult res;
  double acc = 0;
  std::size_t cnt = 0;
  for (const auto& s : samples) {
    const std::size_t H = s.height(), W = s.width();
    const std::size_t wh = window_h ? window_h : H;
    const std::size_t ww = window_w ? window_w : W;
    auto fwd = [&](const Tensor<float>& patch) { return model.forward(patch).logits; };
    auto probs = sliding_window_infer(fwd, s.image, wh, ww);
    std::vector<std::uint8_t> pred(H * W);
    for (std::size_t i = 0; i < H * W; ++i) {
      std::size_t best = 0;
      for (std::size_t c = 1; c < C; ++c)
        if (probs[c * H * W + i] > probs[best * H * W + i]) best = c;
      pred[i] = static_cast<std::uint8_t>(best);
    }
    for (std::size_t c = 1; c < C; ++c) {
      CaseMetrics r;
      r.id = s.id;
      r.cls = static_cast<int>(c);
      r.dsc_value = dsc(pred, s.label, static_cast<int>(c));
      r.hd95_value = hd95(pred, s.label, H, W, static_cast<int>(c), s.spacing[0], s.spacing[1]);
      acc += r.dsc_value;
      ++cnt;
      res.records.push_back(std::move(r));
    }
  }
  res.mean_dsc = cnt ? acc / static_cast<double>(cnt) : 0.0;
  return res;
}

struct EpochLog {
  int epoch = 0;
  double lr = 0;
  double loss = 0, main_loss = 0, aux_loss = 0;
  double val_dsc = std::numeric_limits<double>::quiet_NaN();
};

struct TrainResult {
  std::vector<EpochLog> epochs;
  double best_val_dsc = 0.0;
  bool aborted = false;
  std::string abort_reason;
};

namespace detail {

inline std::vector<std::uint8_t> downsample_labels_4x(const std::vector<std::uint8_t>& labels,
                                                      std::size_t H, std::size_t W) {
  const std::size_t h = H / 4, w = W / 4;
  std::vector<std::uint8_t> out(h * w);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      // nearest sample under the half-pixel map: src = 4*dst + 1.5, rounded up
      const std::size_t sy = std::min(4 * y + 2, H - 1);
      const std::size_t sx = std::min(4 * x + 2, W - 1);
      out[y * w + x] = labels[sy * W + sx];
    }
  return out;
}

inline std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace detail

template <class T>
TrainResult train(Model<T>& model, const std::vector<SegSample>& train_set,
                  const std::vector<SegSample>& val_set, const TrainConfig& cfg) {
  namespace fs = std::filesystem;
  check(!train_set.empty(), "train: empty training set");
  const bool artifacts = !cfg.out_dir.empty();
  if (artifacts) fs::create_directories(fs::path(cfg.out_dir) / "checkpoints");

  std::ofstream metrics;
  if (artifacts) {
    metrics.open(fs::path(cfg.out_dir) / "metrics.csv");
    metrics << "epoch,lr,loss,main_loss,aux_loss,val_dsc\n";
    metrics.precision(17);
    std::ofstream man(fs::path(cfg.out_dir) / "manifest");
    man << "version=" << version_string() << "\n"
        << "seed=" << cfg.seed << "\n"
        << "config_hash=" << detail::fnv1a(train_config_to_text(cfg)) << "\n"
        << "model_config_hash=" << detail::fnv1a(config_to_text(model.config())) << "\n"
        << "train_cases=" << train_set.size() << "\nval_cases=" << val_set.size() << "\n"
        << "workers=1\n";
  }

  AdamW<T> opt;
  opt.weight_decay = cfg.weight_decay;
  opt.init(model.parameters());
  std::mt19937_64 rng(cfg.seed);
  const double aux_w = model.config().aux_loss_weight;

  TrainResult result;
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = lr_schedule(cfg.lr0, cfg.gamma, epoch);
    std::shuffle(order.begin(), order.end(), rng);
    EpochLog log;
    log.epoch = epoch;
    log.lr = lr;
    for (std::size_t idx : order) {
      SegSample s = train_set[idx];
      if (cfg.augment) {
        AugmentConfig ac;
        s = augment(s, ac, rng);
      }
      auto out = model.forward(s.image);
      auto aux_labels = detail::downsample_labels_4x(s.label, s.height(), s.width());
      auto main_l = total_loss(softmax_channels(out.logits), s.label);
      auto aux_l = total_loss(softmax_channels(out.aux_logits), aux_labels);
      auto loss = add(main_l, scale(aux_l, static_cast<T>(aux_w)));
      const T lv = loss.item(), mv = main_l.item(), av = aux_l.item();
      if (!std::isfinite(lv)) {
        result.aborted = true;
        result.abort_reason = "non-finite loss at epoch " + std::to_string(epoch);
        return result;
      }
      // the optimized scalar must decompose exactly (in T arithmetic)
      check(lv == mv + static_cast<T>(aux_w) * av, "train: loss decomposition mismatch");
      log.loss += lv;
      log.main_loss += mv;
      log.aux_loss += av;
      model.zero_grad();
      backward(loss);
      clip_global_norm(model.parameters(), cfg.clip_norm);
      opt.step(model.parameters(), lr);
    }
    const double n = static_cast<double>(order.size());
    log.loss /= n;
    log.main_loss /= n;
    log.aux_loss /= n;

    if (!val_set.empty() && (epoch % cfg.val_every == 0 || epoch + 1 == cfg.epochs)) {
      log.val_dsc = evaluate(model, val_set, cfg.window_h, cfg.window_w).mean_dsc;
      if (artifacts && log.val_dsc >= result.best_val_dsc)
        model.save_checkpoint(
            (fs::path(cfg.out_dir) / "checkpoints" / "best.ckpt").string());
      result.best_val_dsc = std::max(result.best_val_dsc, log.val_dsc);
    }
    if (artifacts) {
      model.save_checkpoint((fs::path(cfg.out_dir) / "checkpoints" / "last.ckpt").string());
      metrics << log.epoch << "," << log.lr << "," << log.loss << "," << log.main_loss << ","
              << log.aux_loss << "," << log.val_dsc << "\n"
              << std::flush;
    }
    result.epochs.push_back(log);
    if (cfg.stop_at_dsc > 0 && result.best_val_dsc >= cfg.stop_at_dsc) break;
  }
  return result;
}

}  // namespace mf
