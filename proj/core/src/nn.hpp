#pragma once

#include <random>
#include <vector>

#include "ctrlsimp/model.hpp"

namespace ctrlsimp::model::nn {

struct DropoutMask {
  Matrix scale;  // empty when dropout was inactive
};

Matrix dropout(const Matrix& x, DropoutContext* ctx, DropoutMask* mask);
Matrix dropout_backward(const Matrix& dy, const DropoutMask& mask);

struct LayerNormCache {
  Matrix xhat;
  Eigen::VectorXd inv_std;
};

Matrix layer_norm(const Matrix& x, const LayerNormWeights& w, LayerNormCache* cache);
Matrix layer_norm_backward(const Matrix& dy, const LayerNormWeights& w, const LayerNormCache& cache,
                           LayerNormWeights& grad);

struct AttentionCache {
  Matrix xq, xkv, q, k, v, concat;
  std::vector<Matrix> probs;
};

Matrix attention(const Matrix& xq, const Matrix& xkv, const AttentionWeights& w, int heads, bool causal,
                 AttentionCache* cache);
// Accumulates into *dxq and *dxkv, which may alias.
void attention_backward(const Matrix& dy, const AttentionWeights& w, int heads, const AttentionCache& cache,
                        AttentionWeights& grad, Matrix* dxq, Matrix* dxkv);

// Attention for one query row against precomputed keys and values.
Eigen::RowVectorXd attend_row(const Eigen::RowVectorXd& q, const Matrix& k, const Matrix& v, int heads);

struct FeedForwardCache {
  Matrix x, pre;
};

Matrix feed_forward(const Matrix& x, const FeedForwardWeights& w, FeedForwardCache* cache);
Matrix feed_forward_backward(const Matrix& dy, const FeedForwardWeights& w, const FeedForwardCache& cache,
                             FeedForwardWeights& grad);

void softmax_rows(Matrix& m);

struct EncoderLayerCache {
  LayerNormCache norm1;
  AttentionCache attention;
  DropoutMask drop1;
  LayerNormCache norm2;
  FeedForwardCache ffn;
  DropoutMask drop2;
};

Matrix encoder_layer(const Matrix& x, const EncoderLayerWeights& w, int heads, DropoutContext* dc,
                     EncoderLayerCache* cache);
Matrix encoder_layer_backward(const Matrix& dy, const EncoderLayerWeights& w, int heads,
                              const EncoderLayerCache& cache, EncoderLayerWeights& grad);

struct DecoderLayerCache {
  LayerNormCache norm1;
  AttentionCache self_attention;
  DropoutMask drop1;
  LayerNormCache norm2;
  AttentionCache cross_attention;
  DropoutMask drop2;
  LayerNormCache norm3;
  FeedForwardCache ffn;
  DropoutMask drop3;
};

Matrix decoder_layer(const Matrix& y, const Matrix& enc, const DecoderLayerWeights& w, int heads, DropoutContext* dc,
                     DecoderLayerCache* cache);
// Returns d/dy; accumulates d/denc into *denc.
Matrix decoder_layer_backward(const Matrix& dy, const DecoderLayerWeights& w, int heads,
                              const DecoderLayerCache& cache, DecoderLayerWeights& grad, Matrix* denc);

}  // namespace ctrlsimp::model::nn
