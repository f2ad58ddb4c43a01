#pragma once

#include <random>
#include <string>
#include <vector>

#include "medformer/attention.hpp"
#include "medformer/modules.hpp"
#include "medformer/tensor.hpp"

namespace mf {

// One conventional Transformer block over a flat token sequence, carried as
// a d x L x 1 map so the conv/norm machinery applies. No positional encoding,
// so the block is permutation equivariant over tokens.
template <class T>
struct FusionTransformerBlock {
  GroupNormLayer<T> norm1, norm2;
  DenseMhsa<T> attn;
  PointwiseFFN<T> ffn;

  void init(std::size_t d, int heads, std::mt19937_64& rng) {
    norm1.init(d);
    norm2.init(d);
    attn.init(d, heads, rng);
    ffn.init(d, rng);
  }

  void reg(ParamRegistry<T>& r, const std::string& p) {
    norm1.reg(r, p + ".norm1");
    norm2.reg(r, p + ".norm2");
    attn.reg(r, p + ".attn");
    ffn.reg(r, p + ".ffn");
  }

  Tensor<T> operator()(const Tensor<T>& x) const {
    auto x1 = add(x, attn(norm1(x)));
    return add(x1, ffn(norm2(x1)));
  }
};

// Multi-scale semantic map fusion: flatten every scale's tokens, concatenate
// into one sequence, run dense Transformer blocks, chunk back to the original
// per-scale shapes. All maps must share the channel count.
template <class T>
struct SemanticFusion {
  std::size_t d = 0;
  int n_blocks = 2;
  std::vector<FusionTransformerBlock<T>> blocks;

  void init(std::size_t d_, int n_blocks_, int heads, std::mt19937_64& rng) {
    d = d_;
    n_blocks = n_blocks_;
    blocks.resize(n_blocks);
    for (auto& b : blocks) b.init(d, heads, rng);
  }

  void reg(ParamRegistry<T>& r, const std::string& p) {
    for (int i = 0; i < n_blocks; ++i) blocks[i].reg(r, p + ".block" + std::to_string(i));
  }

  std::vector<Tensor<T>> operator()(const std::vector<Tensor<T>>& maps) const {
    check(!maps.empty(), "fuse_semantic_maps: empty scale list");
    for (std::size_t i = 0; i < maps.size(); ++i)
      check(maps[i].rank() == 3 && maps[i].dim(0) == d,
            "fuse_semantic_maps: scale " + std::to_string(i) + " has channel count " +
                std::to_string(maps[i].dim(0)) + ", expected " + std::to_string(d));
    std::vector<Tensor<T>> seqs;
    std::vector<std::size_t> lens;
    for (const auto& m : maps) {
      auto s = map_to_seq(m);  // (h*w) x d
      lens.push_back(s.dim(0));
      seqs.push_back(s);
    }
    auto cat = concat_rows(seqs);
    auto x = reshape(transpose(cat), Shape{d, cat.dim(0), 1});
    for (const auto& b : blocks) x = b(x);
    auto fused = transpose(reshape(x, Shape{d, cat.dim(0)}));
    std::vector<Tensor<T>> out;
    std::size_t off = 0;
    for (std::size_t i = 0; i < maps.size(); ++i) {
      auto part = slice_rows(fused, off, off + lens[i]);
      out.push_back(seq_to_map(part, maps[i].dim(1), maps[i].dim(2)));
      off += lens[i];
    }
    return out;
  }
};

}  // namespace mf
