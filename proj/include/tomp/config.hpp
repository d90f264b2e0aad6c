#pragma once

#include "tomp/geometry.hpp"

#include <array>
#include <stdexcept>
#include <string>

namespace tomp {

struct TransformerConfig {
  int heads = 8;
  int ffn_width = 2048;
  double dropout = 0.1;
  int enc_layers = 2;
  int dec_layers = 2;
  /// Decoder query is the foreground embedding itself.
  bool shared_query = true;
  /// Two independent learned queries, one per predicted filter, and no split layer.
  bool two_queries = false;
};

struct ModelConfig {
  int channels = 256;
  int score_size = 18;
  int stride = 16;
  std::array<int, 4> backbone_widths{16, 32, 64, 64};
  int extent_hidden = 64;
  int head_width = 256;
  int head_kernel = 3;
  bool use_fg_embedding = true;
  bool use_bg_embedding = false;
  bool use_test_embedding = true;
  bool use_extent_encoding = true;
  double sigma_ratio = 0.25;
  double search_factor = 5.0;
  TransformerConfig transformer;

  int patch_px() const { return stride * score_size; }
  GridShape grid() const { return {score_size, score_size, stride}; }

  void validate() const {
    if (channels < 4 || channels % 4 != 0) throw std::invalid_argument("ModelConfig: channels must be a positive multiple of 4");
    if (transformer.heads < 1 || channels % transformer.heads != 0)
      throw std::invalid_argument("ModelConfig: channels must be divisible by heads");
    if (stride != 16) throw std::invalid_argument("ModelConfig: the backbone has a fixed total stride of 16");
    if (score_size < 1) throw std::invalid_argument("ModelConfig: score_size must be positive");
    if (transformer.enc_layers < 0 || transformer.dec_layers < 1)
      throw std::invalid_argument("ModelConfig: need >= 0 encoder and >= 1 decoder layers");
    if (transformer.dropout < 0.0 || transformer.dropout >= 1.0) throw std::invalid_argument("ModelConfig: dropout in [0,1)");
    for (int w : backbone_widths)
      if (w < 1) throw std::invalid_argument("ModelConfig: backbone widths must be positive");
    if (head_kernel < 1 || head_kernel % 2 == 0) throw std::invalid_argument("ModelConfig: head kernel must be odd");
  }
};

}  // namespace tomp
