#pragma once

#include <array>
#include <cstdint>
#include <fstream>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "medformer/attention.hpp"
#include "medformer/fusion.hpp"
#include "medformer/modules.hpp"
#include "medformer/semantic_map.hpp"

namespace mf {

struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

enum class AttnVariant { bmha, linear };

inline std::string to_string(AttnVariant v) {
  return v == AttnVariant::bmha ? "bmha" : "linear";
}

// Full architectural hyperparameter record.
struct ModelConfig {
  std::size_t in_channels = 1;
  std::size_t num_classes = 2;
  std::size_t base_width = 16;                  // stem width (full and half res)
  std::array<std::size_t, 3> widths = {32, 64, 128};  // level widths at 4x/8x/16x
  std::array<int, 3> blocks = {2, 2, 2};        // N1, N2, N3
  std::array<int, 3> heads = {4, 4, 4};
  std::size_t sem_h = 4, sem_w = 4;
  double aux_loss_weight = 0.5;
  AttnVariant variant = AttnVariant::bmha;
  int fuse_blocks = 2;
  int fuse_heads = 4;
  std::size_t proj_kernel = 3;
  int spatial_rank = 2;

  void validate() const {
    if (in_channels < 1) throw ConfigError("in_channels: must be >= 1");
    if (num_classes < 2) throw ConfigError("num_classes: must be >= 2");
    if (base_width < 1) throw ConfigError("base_width: must be >= 1");
    if (spatial_rank != 2) throw ConfigError("spatial_rank: only 2 is supported");
    if (sem_h < 1 || sem_w < 1) throw ConfigError("sem_h/sem_w: must be >= 1");
    if (aux_loss_weight < 0) throw ConfigError("aux_loss_weight: must be >= 0");
    if (proj_kernel % 2 == 0) throw ConfigError("proj_kernel: must be odd");
    for (int i = 0; i < 3; ++i) {
      if (blocks[i] < 1) throw ConfigError("blocks[" + std::to_string(i) + "]: must be >= 1");
      if (heads[i] < 1 || widths[i] % static_cast<std::size_t>(heads[i]) != 0)
        throw ConfigError("widths[" + std::to_string(i) + "]: not divisible by heads[" +
                          std::to_string(i) + "]");
    }
    if (fuse_blocks < 1) throw ConfigError("fuse_blocks: must be >= 1");
    if (widths[0] % static_cast<std::size_t>(fuse_heads) != 0)
      throw ConfigError("fuse_heads: must divide widths[0]");
  }

  std::size_t fuse_width() const { return widths[0]; }
};

// key=value serialization, also the checkpoint config record.
inline std::string config_to_text(const ModelConfig& c) {
  std::ostringstream os;
  os.precision(17);
  os << "in_channels=" << c.in_channels << "\n"
     << "num_classes=" << c.num_classes << "\n"
     << "base_width=" << c.base_width << "\n"
     << "w1=" << c.widths[0] << "\nw2=" << c.widths[1] << "\nw3=" << c.widths[2] << "\n"
     << "n1=" << c.blocks[0] << "\nn2=" << c.blocks[1] << "\nn3=" << c.blocks[2] << "\n"
     << "h1=" << c.heads[0] << "\nh2=" << c.heads[1] << "\nh3=" << c.heads[2] << "\n"
     << "sem_h=" << c.sem_h << "\nsem_w=" << c.sem_w << "\n"
     << "aux_weight=" << c.aux_loss_weight << "\n"
     << "variant=" << to_string(c.variant) << "\n"
     << "fuse_blocks=" << c.fuse_blocks << "\nfuse_heads=" << c.fuse_heads << "\n"
     << "kernel=" << c.proj_kernel << "\n";
  return os.str();
}

inline std::map<std::string, std::string> parse_kv(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ValueError("config: malformed line '" + line + "'");
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return kv;
}

inline ModelConfig config_from_text(const std::string& text) {
  auto kv = parse_kv(text);
  ModelConfig c;
  auto get = [&](const std::string& k) -> const std::string& {
    auto it = kv.find(k);
    if (it == kv.end()) throw ValueError("config: missing key '" + k + "'");
    return it->second;
  };
  c.in_channels = std::stoul(get("in_channels"));
  c.num_classes = std::stoul(get("num_classes"));
  c.base_width = std::stoul(get("base_width"));
  c.widths = {std::stoul(get("w1")), std::stoul(get("w2")), std::stoul(get("w3"))};
  c.blocks = {std::stoi(get("n1")), std::stoi(get("n2")), std::stoi(get("n3"))};
  c.heads = {std::stoi(get("h1")), std::stoi(get("h2")), std::stoi(get("h3"))};
  c.sem_h = std::stoul(get("sem_h"));
  c.sem_w = std::stoul(get("sem_w"));
  c.aux_loss_weight = std::stod(get("aux_weight"));
  const std::string v = get("variant");
  if (v == "bmha")
    c.variant = AttnVariant::bmha;
  else if (v == "linear")
    c.variant = AttnVariant::linear;
  else
    throw ValueError("config: unknown variant '" + v + "'");
  c.fuse_blocks = std::stoi(get("fuse_blocks"));
  c.fuse_heads = std::stoi(get("fuse_heads"));
  c.proj_kernel = std::stoul(get("kernel"));
  return c;
}

template <class T>
struct ForwardOutput {
  Tensor<T> logits;      // C x H x W
  Tensor<T> aux_logits;  // C x H/4 x W/4
  std::vector<Tensor<T>> encoder_maps;   // token maps after each encoder level
  std::vector<Tensor<T>> semantic_maps;  // final encoder semantic maps (bmha)
  std::vector<Tensor<T>> decoder_semantic_maps;  // refined decoder maps (bmha)
};

template <class T>
struct ModelTrace {
  std::vector<AttnTrace<T>> encoder;  // last block per encoder level
  std::vector<AttnTrace<T>> decoder;  // last block per decoder level (4x first)
};

template <class T>
class Model {
 public:
  static Model build(const ModelConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    Model m;
    m.cfg_ = cfg;
    std::mt19937_64 rng(seed);
    m.init(rng);
    m.register_params();
    return m;
  }

  const ModelConfig& config() const { return cfg_; }

  std::size_t parameter_count() const { return reg_.count(); }
  std::map<std::string, Tensor<T>*> named_parameters() { return reg_.named(); }
  const std::vector<std::pair<std::string, Tensor<T>*>>& parameters() { return reg_.items; }

  void zero_grad() {
    for (auto& [name, t] : reg_.items) t->zero_grad();
  }

  ForwardOutput<T> forward(const Tensor<T>& image, ModelTrace<T>* trace = nullptr) const {
    check(image.rank() == 3 && image.dim(0) == cfg_.in_channels,
          "forward: expected " + std::to_string(cfg_.in_channels) + "xHxW image, got " +
              shape_str(image.shape()));
    const std::size_t H = image.dim(1), W = image.dim(2);
    check(H % 16 == 0 && W % 16 == 0,
          "forward: spatial extents must be divisible by 16, got " + shape_str(image.shape()));
    if (trace) {
      trace->encoder.assign(3, {});
      trace->decoder.assign(2, {});
    }
    ForwardOutput<T> out;

    // stem: full res and half res skips, 4x token map
    auto s_full = stem_full_[1](stem_full_[0](conv_in_(image)));
    auto s_half = stem_half_[1](stem_half_[0](down1_(s_full)));
    auto x = down2_(s_half);

    // encoder
    std::vector<Tensor<T>> skips;
    std::vector<Tensor<T>> sems;
    for (int lvl = 0; lvl < 3; ++lvl) {
      if (cfg_.variant == AttnVariant::bmha) {
        auto m = sem_init_[lvl](x);
        const auto& blocks = enc_bmha_[lvl];
        for (std::size_t b = 0; b < blocks.size(); ++b) {
          AttnTrace<T>* tr = (trace && b + 1 == blocks.size()) ? &trace->encoder[lvl] : nullptr;
          std::tie(x, m) = blocks[b](x, m, tr);
        }
        sems.push_back(m);
      } else {
        for (const auto& blk : enc_lin_[lvl]) x = blk(x);
      }
      out.encoder_maps.push_back(x.detached());
      if (lvl < 2) {
        skips.push_back(x);
        x = pm_reduce_[lvl](space_to_depth2(x));
      }
    }
    out.semantic_maps = sems;

    // global multi-scale semantic fusion
    std::vector<Tensor<T>> fused(2);
    if (cfg_.variant == AttnVariant::bmha) {
      std::vector<Tensor<T>> proj;
      for (int i = 0; i < 3; ++i) proj.push_back(fuse_in_[i](sems[i]));
      auto fused_core = fusion_(proj);
      for (int i = 0; i < 2; ++i) fused[i] = fuse_out_[i](fused_core[i]);
    }

    // decoder: 16x -> 8x -> 4x
    for (int j = 1; j >= 0; --j) {
      x = up_conv_[j](upsample2x(x));
      x = skip_reduce_[j](concat_channels(x, skips[j]));
      if (cfg_.variant == AttnVariant::bmha) {
        auto m = fused[j];
        for (const auto& blk : dec_bmha_[j]) std::tie(x, m) = blk(x, m);
        x = dec_cross_[j](x, m, trace ? &trace->decoder[j] : nullptr);
        out.decoder_semantic_maps.insert(out.decoder_semantic_maps.begin(), m);
      } else {
        for (const auto& blk : dec_lin_[j]) x = blk(x);
      }
    }
    out.aux_logits = aux_head_(x);

    // convolutional final decoder with stem skips
    auto y = up_half_(upsample2x(x));
    y = dec_half_[1](dec_half_[0](skip_half_reduce_(concat_channels(y, s_half))));
    y = up_full_(upsample2x(y));
    y = dec_full_[1](dec_full_[0](skip_full_reduce_(concat_channels(y, s_full))));
    out.logits = head_(y);
    return out;
  }

  // ------------------------------------------------------------------
  // Checkpoint format "MFCKPT1": magic, u32 config length, config text,
  // u32 entry count, then name-sorted entries of
  //   u32 name length | name bytes | u8 dtype (0=f32, 1=f64) | u8 rank |
  //   u64 extents[rank] | little-endian payload.
  // ------------------------------------------------------------------

  void save_checkpoint(const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw ValueError("checkpoint: cannot open '" + path + "' for writing");
    f.write("MFCKPT1", 7);
    const std::string cfg_text = config_to_text(cfg_);
    write_u32(f, static_cast<std::uint32_t>(cfg_text.size()));
    f.write(cfg_text.data(), static_cast<std::streamsize>(cfg_text.size()));
    auto named = reg_.named();  // sorted by name
    write_u32(f, static_cast<std::uint32_t>(named.size()));
    for (auto& [name, t] : named) {
      write_u32(f, static_cast<std::uint32_t>(name.size()));
      f.write(name.data(), static_cast<std::streamsize>(name.size()));
      f.put(static_cast<char>(sizeof(T) == 4 ? 0 : 1));
      f.put(static_cast<char>(t->rank()));
      for (std::size_t i = 0; i < t->rank(); ++i) write_u64(f, t->dim(i));
      f.write(reinterpret_cast<const char*>(t->data()),
              static_cast<std::streamsize>(t->size() * sizeof(T)));
    }
    if (!f) throw ValueError("checkpoint: write failed for '" + path + "'");
  }

  static Model load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ValueError("checkpoint: cannot open '" + path + "'");
    char magic[7];
    f.read(magic, 7);
    if (!f || std::string(magic, 7) != "MFCKPT1")
      throw ValueError("checkpoint: bad magic in '" + path + "'");
    const std::uint32_t cfg_len = read_u32(f);
    std::string cfg_text(cfg_len, '\0');
    f.read(cfg_text.data(), cfg_len);
    Model m = build(config_from_text(cfg_text), 0);
    auto named = m.reg_.named();
    const std::uint32_t n = read_u32(f);
    if (n != named.size())
      throw ValueError("checkpoint: parameter count mismatch: file has " + std::to_string(n) +
                       ", model expects " + std::to_string(named.size()));
    for (std::uint32_t i = 0; i < n; ++i) {
      const std::uint32_t name_len = read_u32(f);
      std::string name(name_len, '\0');
      f.read(name.data(), name_len);
      auto it = named.find(name);
      if (it == named.end()) throw ValueError("checkpoint: unknown parameter '" + name + "'");
      const int dtype = f.get();
      if (dtype != (sizeof(T) == 4 ? 0 : 1))
        throw ValueError("checkpoint: dtype mismatch for '" + name + "'");
      const int rank = f.get();
      Shape shape(static_cast<std::size_t>(rank));
      for (auto& e : shape) e = read_u64(f);
      if (shape != it->second->shape())
        throw ValueError("checkpoint: shape mismatch for '" + name + "': file " +
                         shape_str(shape) + " vs model " + shape_str(it->second->shape()));
      f.read(reinterpret_cast<char*>(it->second->data()),
             static_cast<std::streamsize>(it->second->size() * sizeof(T)));
      if (!f) throw ValueError("checkpoint: truncated payload for '" + name + "'");
    }
    return m;
  }

 private:
  ModelConfig cfg_;
  ParamRegistry<T> reg_;

  Conv2dLayer<T> conv_in_, down1_, down2_;
  std::array<ResBlock<T>, 2> stem_full_, stem_half_;
  std::array<SemanticMapInit<T>, 3> sem_init_;
  std::array<std::vector<BmhaBlock<T>>, 3> enc_bmha_;
  std::array<std::vector<EfficientAttnBlock<T>>, 3> enc_lin_;
  std::array<Conv2dLayer<T>, 2> pm_reduce_;
  std::array<Conv2dLayer<T>, 3> fuse_in_;
  std::array<Conv2dLayer<T>, 2> fuse_out_;
  SemanticFusion<T> fusion_;
  std::array<Conv2dLayer<T>, 2> up_conv_, skip_reduce_;
  std::array<std::vector<BmhaBlock<T>>, 2> dec_bmha_;
  std::array<BmhaCrossBlock<T>, 2> dec_cross_;
  std::array<std::vector<EfficientAttnBlock<T>>, 2> dec_lin_;
  Conv2dLayer<T> aux_head_;
  Conv2dLayer<T> up_half_, skip_half_reduce_, up_full_, skip_full_reduce_, head_;
  std::array<ResBlock<T>, 2> dec_half_, dec_full_;

  AttnConfig attn_cfg(int lvl) const {
    AttnConfig a;
    a.d = cfg_.widths[lvl];
    a.n_heads = cfg_.heads[lvl];
    a.k = cfg_.proj_kernel;
    a.sem_h = cfg_.sem_h;
    a.sem_w = cfg_.sem_w;
    return a;
  }

  void init(std::mt19937_64& rng) {
    const std::size_t d0 = cfg_.base_width;
    conv_in_.init(d0, cfg_.in_channels, 3, 1, 1, 1, rng);
    for (auto& b : stem_full_) b.init(d0, d0, rng);
    down1_.init(d0, d0, 2, 2, 0, 1, rng);
    for (auto& b : stem_half_) b.init(d0, d0, rng);
    down2_.init(cfg_.widths[0], d0, 2, 2, 0, 1, rng);

    for (int lvl = 0; lvl < 3; ++lvl) {
      const auto ac = attn_cfg(lvl);
      if (cfg_.variant == AttnVariant::bmha) {
        sem_init_[lvl].init(ac.d, cfg_.sem_h, cfg_.sem_w, rng);
        enc_bmha_[lvl].resize(cfg_.blocks[lvl]);
        for (auto& b : enc_bmha_[lvl]) b.init(ac, rng);
      } else {
        enc_lin_[lvl].resize(cfg_.blocks[lvl]);
        for (auto& b : enc_lin_[lvl]) b.init(ac, rng);
      }
      if (lvl < 2) pm_reduce_[lvl].init(cfg_.widths[lvl + 1], 4 * cfg_.widths[lvl], 1, 1, 0, 1, rng);
    }

    if (cfg_.variant == AttnVariant::bmha) {
      const std::size_t df = cfg_.fuse_width();
      for (int i = 0; i < 3; ++i) fuse_in_[i].init(df, cfg_.widths[i], 1, 1, 0, 1, rng);
      fusion_.init(df, cfg_.fuse_blocks, cfg_.fuse_heads, rng);
      for (int i = 0; i < 2; ++i) fuse_out_[i].init(cfg_.widths[i], df, 1, 1, 0, 1, rng);
    }

    for (int j = 0; j < 2; ++j) {
      up_conv_[j].init(cfg_.widths[j], cfg_.widths[j + 1], 3, 1, 1, 1, rng);
      skip_reduce_[j].init(cfg_.widths[j], 2 * cfg_.widths[j], 1, 1, 0, 1, rng);
      const auto ac = attn_cfg(j);
      if (cfg_.variant == AttnVariant::bmha) {
        dec_bmha_[j].resize(cfg_.blocks[j] - 1);
        for (auto& b : dec_bmha_[j]) b.init(ac, rng);
        dec_cross_[j].init(ac, rng);
      } else {
        dec_lin_[j].resize(cfg_.blocks[j]);
        for (auto& b : dec_lin_[j]) b.init(ac, rng);
      }
    }
    aux_head_.init(cfg_.num_classes, cfg_.widths[0], 1, 1, 0, 1, rng);
    damp_head(aux_head_);

    up_half_.init(d0, cfg_.widths[0], 3, 1, 1, 1, rng);
    skip_half_reduce_.init(d0, 2 * d0, 1, 1, 0, 1, rng);
    for (auto& b : dec_half_) b.init(d0, d0, rng);
    up_full_.init(d0, d0, 3, 1, 1, 1, rng);
    skip_full_reduce_.init(d0, 2 * d0, 1, 1, 0, 1, rng);
    for (auto& b : dec_full_) b.init(d0, d0, rng);
    head_.init(cfg_.num_classes, d0, 1, 1, 0, 1, rng);
    damp_head(head_);
  }

  // Logit heads start near zero so the initial prediction is near uniform;
  // full-scale random heads start saturated, which stalls training on
  // imbalanced labels. Kept nonzero so gradients still reach every layer.
  static void damp_head(Conv2dLayer<T>& c) {
    for (auto& v : c.w.vec()) v *= T(0.01);
  }

  void register_params() {
    auto& r = reg_;
    conv_in_.reg(r, "stem.conv_in");
    for (int i = 0; i < 2; ++i) stem_full_[i].reg(r, "stem.full" + std::to_string(i));
    down1_.reg(r, "stem.down1");
    for (int i = 0; i < 2; ++i) stem_half_[i].reg(r, "stem.half" + std::to_string(i));
    down2_.reg(r, "stem.down2");
    for (int lvl = 0; lvl < 3; ++lvl) {
      const std::string p = "enc" + std::to_string(lvl);
      if (cfg_.variant == AttnVariant::bmha) {
        sem_init_[lvl].reg(r, p + ".sem_init");
        for (std::size_t b = 0; b < enc_bmha_[lvl].size(); ++b)
          enc_bmha_[lvl][b].reg(r, p + ".block" + std::to_string(b));
      } else {
        for (std::size_t b = 0; b < enc_lin_[lvl].size(); ++b)
          enc_lin_[lvl][b].reg(r, p + ".block" + std::to_string(b));
      }
      if (lvl < 2) pm_reduce_[lvl].reg(r, "merge" + std::to_string(lvl));
    }
    if (cfg_.variant == AttnVariant::bmha) {
      for (int i = 0; i < 3; ++i) fuse_in_[i].reg(r, "fuse.in" + std::to_string(i));
      fusion_.reg(r, "fuse.core");
      for (int i = 0; i < 2; ++i) fuse_out_[i].reg(r, "fuse.out" + std::to_string(i));
    }
    for (int j = 0; j < 2; ++j) {
      const std::string p = "dec" + std::to_string(j);
      up_conv_[j].reg(r, p + ".up");
      skip_reduce_[j].reg(r, p + ".skip");
      if (cfg_.variant == AttnVariant::bmha) {
        for (std::size_t b = 0; b < dec_bmha_[j].size(); ++b)
          dec_bmha_[j][b].reg(r, p + ".block" + std::to_string(b));
        dec_cross_[j].reg(r, p + ".block" + std::to_string(dec_bmha_[j].size()));
      } else {
        for (std::size_t b = 0; b < dec_lin_[j].size(); ++b)
          dec_lin_[j][b].reg(r, p + ".block" + std::to_string(b));
      }
    }
    aux_head_.reg(r, "aux_head");
    up_half_.reg(r, "convdec.up_half");
    skip_half_reduce_.reg(r, "convdec.skip_half");
    for (int i = 0; i < 2; ++i) dec_half_[i].reg(r, "convdec.half" + std::to_string(i));
    up_full_.reg(r, "convdec.up_full");
    skip_full_reduce_.reg(r, "convdec.skip_full");
    for (int i = 0; i < 2; ++i) dec_full_[i].reg(r, "convdec.full" + std::to_string(i));
    head_.reg(r, "head");
  }

  static void write_u32(std::ofstream& f, std::uint32_t v) {
    char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    f.write(b, 4);
  }
  static void write_u64(std::ofstream& f, std::uint64_t v) {
    char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    f.write(b, 8);
  }
  static std::uint32_t read_u32(std::ifstream& f) {
    unsigned char b[4];
    f.read(reinterpret_cast<char*>(b), 4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
  }
  static std::uint64_t read_u64(std::ifstream& f) {
    unsigned char b[8];
    f.read(reinterpret_cast<char*>(b), 8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
  }
};

}  // namespace mf
