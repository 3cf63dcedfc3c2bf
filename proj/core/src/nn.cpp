#include "nn.hpp"

#include <cmath>
#include <limits>

namespace ctrlsimp::model::nn {

namespace {

constexpr double kNormEpsilon = 1e-6;

double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

}  // namespace

Matrix dropout(const Matrix& x, DropoutContext* ctx, DropoutMask* mask) {
  if (!ctx || !ctx->rng || ctx->rate <= 0.0) {
    if (mask) mask->scale.resize(0, 0);
    return x;
  }
  const double keep = 1.0 - ctx->rate;
  Matrix scale(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < scale.size(); ++i)
    scale.data()[i] = uniform01(*ctx->rng) < keep ? 1.0 / keep : 0.0;
  Matrix y = x.cwiseProduct(scale);
  if (mask) mask->scale = std::move(scale);
  return y;
}

Matrix dropout_backward(const Matrix& dy, const DropoutMask& mask) {
  if (mask.scale.size() == 0) return dy;
  return dy.cwiseProduct(mask.scale);
}

Matrix layer_norm(const Matrix& x, const LayerNormWeights& w, LayerNormCache* cache) {
  const Eigen::Index n = x.rows(), d = x.cols();
  Matrix y(n, d);
  if (cache) {
    cache->xhat.resize(n, d);
    cache->inv_std.resize(n);
  }
  for (Eigen::Index r = 0; r < n; ++r) {
    const double mean = x.row(r).mean();
    Eigen::RowVectorXd centered = x.row(r).array() - mean;
    const double var = centered.squaredNorm() / static_cast<double>(d);
    const double inv = 1.0 / std::sqrt(var + kNormEpsilon);
    Eigen::RowVectorXd xhat = centered * inv;
    y.row(r) = xhat.cwiseProduct(w.gain.row(0)) + w.bias.row(0);
    if (cache) {
      cache->xhat.row(r) = xhat;
      cache->inv_std(r) = inv;
    }
  }
  return y;
}

Matrix layer_norm_backward(const Matrix& dy, const LayerNormWeights& w, const LayerNormCache& cache,
                           LayerNormWeights& grad) {
  grad.gain += dy.cwiseProduct(cache.xhat).colwise().sum();
  grad.bias += dy.colwise().sum();
  const Eigen::Index n = dy.rows(), d = dy.cols();
  Matrix dx(n, d);
  for (Eigen::Index r = 0; r < n; ++r) {
    Eigen::RowVectorXd g = dy.row(r).cwiseProduct(w.gain.row(0));
    const double mean_g = g.mean();
    const double mean_gx = g.cwiseProduct(cache.xhat.row(r)).mean();
    dx.row(r) = cache.inv_std(r) * (g.array() - mean_g - cache.xhat.row(r).array() * mean_gx).matrix();
  }
  return dx;
}

void softmax_rows(Matrix& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    const double mx = m.row(r).maxCoeff();
    double total = 0.0;
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      const double v = m(r, c);
      const double e = v == -std::numeric_limits<double>::infinity() ? 0.0 : std::exp(v - mx);
      m(r, c) = e;
      total += e;
    }
    m.row(r) /= total;
  }
}

Matrix attention(const Matrix& xq, const Matrix& xkv, const AttentionWeights& w, int heads, bool causal,
                 AttentionCache* cache) {
  const Eigen::Index n = xq.rows(), m = xkv.rows(), d = xq.cols();
  const Eigen::Index dh = d / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  Matrix q = xq * w.wq;
  q.rowwise() += w.bq.row(0);
  Matrix k = xkv * w.wk;
  k.rowwise() += w.bk.row(0);
  Matrix v = xkv * w.wv;
  v.rowwise() += w.bv.row(0);
  Matrix concat(n, d);
  if (cache) cache->probs.clear();
  for (int h = 0; h < heads; ++h) {
    Matrix s = (q.middleCols(h * dh, dh) * k.middleCols(h * dh, dh).transpose()) * scale;
    if (causal)
      for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = i + 1; j < m; ++j) s(i, j) = -std::numeric_limits<double>::infinity();
    softmax_rows(s);
    concat.middleCols(h * dh, dh) = s * v.middleCols(h * dh, dh);
    if (cache) cache->probs.push_back(std::move(s));
  }
  Matrix y = concat * w.wo;
  y.rowwise() += w.bo.row(0);
  if (cache) {
    cache->xq = xq;
    cache->xkv = xkv;
    cache->q = std::move(q);
    cache->k = std::move(k);
    cache->v = std::move(v);
    cache->concat = std::move(concat);
  }
  return y;
}

void attention_backward(const Matrix& dy, const AttentionWeights& w, int heads, const AttentionCache& c,
                        AttentionWeights& g, Matrix* dxq, Matrix* dxkv) {
  const Eigen::Index n = c.xq.rows(), m = c.xkv.rows(), d = c.xq.cols();
  const Eigen::Index dh = d / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  g.wo += c.concat.transpose() * dy;
  g.bo += dy.colwise().sum();
  Matrix dconcat = dy * w.wo.transpose();
  Matrix dq(n, d), dk(m, d), dv(m, d);
  for (int h = 0; h < heads; ++h) {
    const Matrix& p = c.probs[static_cast<size_t>(h)];
    auto dc = dconcat.middleCols(h * dh, dh);
    Matrix dp = dc * c.v.middleCols(h * dh, dh).transpose();
    dv.middleCols(h * dh, dh) = p.transpose() * dc;
    Eigen::VectorXd row_dot = dp.cwiseProduct(p).rowwise().sum();
    Matrix ds = p.cwiseProduct(dp.colwise() - row_dot);
    dq.middleCols(h * dh, dh) = ds * c.k.middleCols(h * dh, dh) * scale;
    dk.middleCols(h * dh, dh) = ds.transpose() * c.q.middleCols(h * dh, dh) * scale;
  }
  g.wq += c.xq.transpose() * dq;
  g.bq += dq.colwise().sum();
  g.wk += c.xkv.transpose() * dk;
  g.bk += dk.colwise().sum();
  g.wv += c.xkv.transpose() * dv;
  g.bv += dv.colwise().sum();
  *dxq += dq * w.wq.transpose();
  *dxkv += dk * w.wk.transpose() + dv * w.wv.transpose();
}

Eigen::RowVectorXd attend_row(const Eigen::RowVectorXd& q, const Matrix& k, const Matrix& v, int heads) {
  const Eigen::Index d = q.size(), m = k.rows();
  const Eigen::Index dh = d / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  Eigen::RowVectorXd out(d);
  for (int h = 0; h < heads; ++h) {
    Eigen::RowVectorXd s = (q.segment(h * dh, dh) * k.middleCols(h * dh, dh).transpose()) * scale;
    const double mx = s.maxCoeff();
    s = (s.array() - mx).exp();
    s /= s.sum();
    out.segment(h * dh, dh) = s * v.middleCols(h * dh, dh);
  }
  (void)m;
  return out;
}

Matrix feed_forward(const Matrix& x, const FeedForwardWeights& w, FeedForwardCache* cache) {
  Matrix pre = x * w.w1;
  pre.rowwise() += w.b1.row(0);
  Matrix y = pre.cwiseMax(0.0) * w.w2;
  y.rowwise() += w.b2.row(0);
  if (cache) {
    cache->x = x;
    cache->pre = std::move(pre);
  }
  return y;
}

Matrix feed_forward_backward(const Matrix& dy, const FeedForwardWeights& w, const FeedForwardCache& c,
                             FeedForwardWeights& g) {
  Matrix act = c.pre.cwiseMax(0.0);
  g.w2 += act.transpose() * dy;
  g.b2 += dy.colwise().sum();
  Matrix dpre = (dy * w.w2.transpose()).cwiseProduct((c.pre.array() > 0.0).cast<double>().matrix());
  g.w1 += c.x.transpose() * dpre;
  g.b1 += dpre.colwise().sum();
  return dpre * w.w1.transpose();
}

Matrix encoder_layer(const Matrix& x, const EncoderLayerWeights& w, int heads, DropoutContext* dc,
                     EncoderLayerCache* c) {
  Matrix a = layer_norm(x, w.norm1, c ? &c->norm1 : nullptr);
  Matrix x1 = x + dropout(attention(a, a, w.self_attention, heads, false, c ? &c->attention : nullptr), dc,
                          c ? &c->drop1 : nullptr);
  Matrix b = layer_norm(x1, w.norm2, c ? &c->norm2 : nullptr);
  return x1 + dropout(feed_forward(b, w.feed_forward, c ? &c->ffn : nullptr), dc, c ? &c->drop2 : nullptr);
}

Matrix encoder_layer_backward(const Matrix& dy, const EncoderLayerWeights& w, int heads, const EncoderLayerCache& c,
                              EncoderLayerWeights& g) {
  Matrix dx1 = dy;
  Matrix db = feed_forward_backward(dropout_backward(dy, c.drop2), w.feed_forward, c.ffn, g.feed_forward);
  dx1 += layer_norm_backward(db, w.norm2, c.norm2, g.norm2);
  Matrix da = Matrix::Zero(dy.rows(), dy.cols());
  attention_backward(dropout_backward(dx1, c.drop1), w.self_attention, heads, c.attention, g.self_attention, &da,
                     &da);
  return dx1 + layer_norm_backward(da, w.norm1, c.norm1, g.norm1);
}

Matrix decoder_layer(const Matrix& y, const Matrix& enc, const DecoderLayerWeights& w, int heads, DropoutContext* dc,
                     DecoderLayerCache* c) {
  Matrix a = layer_norm(y, w.norm1, c ? &c->norm1 : nullptr);
  Matrix y1 = y + dropout(attention(a, a, w.self_attention, heads, true, c ? &c->self_attention : nullptr), dc,
                          c ? &c->drop1 : nullptr);
  Matrix b = layer_norm(y1, w.norm2, c ? &c->norm2 : nullptr);
  Matrix y2 = y1 + dropout(attention(b, enc, w.cross_attention, heads, false, c ? &c->cross_attention : nullptr),
                           dc, c ? &c->drop2 : nullptr);
  Matrix f = layer_norm(y2, w.norm3, c ? &c->norm3 : nullptr);
  return y2 + dropout(feed_forward(f, w.feed_forward, c ? &c->ffn : nullptr), dc, c ? &c->drop3 : nullptr);
}

Matrix decoder_layer_backward(const Matrix& dy, const DecoderLayerWeights& w, int heads, const DecoderLayerCache& c,
                              DecoderLayerWeights& g, Matrix* denc) {
  Matrix dy2 = dy;
  Matrix df = feed_forward_backward(dropout_backward(dy, c.drop3), w.feed_forward, c.ffn, g.feed_forward);
  dy2 += layer_norm_backward(df, w.norm3, c.norm3, g.norm3);
  Matrix dy1 = dy2;
  Matrix db = Matrix::Zero(dy.rows(), dy.cols());
  attention_backward(dropout_backward(dy2, c.drop2), w.cross_attention, heads, c.cross_attention, g.cross_attention,
                     &db, denc);
  dy1 += layer_norm_backward(db, w.norm2, c.norm2, g.norm2);
  Matrix da = Matrix::Zero(dy.rows(), dy.cols());
  attention_backward(dropout_backward(dy1, c.drop1), w.self_attention, heads, c.self_attention, g.self_attention,
                     &da, &da);
  return dy1 + layer_norm_backward(da, w.norm1, c.norm1, g.norm1);
}

}  // namespace ctrlsimp::model::nn
