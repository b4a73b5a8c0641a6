#include "lungseg/nn/network.hpp"

#include <charconv>
#include <cmath>
#include <numeric>

#include "lungseg/nn/ops.hpp"
#include "lungseg/train/loss.hpp"

namespace lungseg::nn {

std::size_t WidthMultiplier::scale(std::size_t channels) const {
  const std::uint64_t scaled = (2ULL * channels * num + den) / (2ULL * den);
  return scaled == 0 ? 1 : static_cast<std::size_t>(scaled);
}

WidthMultiplier WidthMultiplier::parse(std::string_view text) {
  auto to_u32 = [&](std::string_view s) {
    std::uint32_t v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) {
      fail(ErrorCode::InvalidConfig, "bad width multiplier '" + std::string(text) + "'");
    }
    return v;
  };
  WidthMultiplier w;
  if (auto slash = text.find('/'); slash != std::string_view::npos) {
    w.num = to_u32(text.substr(0, slash));
    w.den = to_u32(text.substr(slash + 1));
  } else if (auto dot = text.find('.'); dot != std::string_view::npos) {
    std::string digits = std::string(text.substr(0, dot)) + std::string(text.substr(dot + 1));
    w.num = to_u32(digits);
    w.den = 1;
    for (std::size_t i = dot + 1; i < text.size(); ++i) w.den *= 10;
  } else {
    w.num = to_u32(text);
  }
  if (w.den == 0) fail(ErrorCode::InvalidConfig, "width multiplier denominator is zero");
  const std::uint32_t g = std::gcd(w.num, w.den);
  if (g > 1) {
    w.num /= g;
    w.den /= g;
  }
  return w;
}

std::string WidthMultiplier::str() const {
  return den == 1 ? std::to_string(num) : std::to_string(num) + "/" + std::to_string(den);
}

void NetworkConfig::validate() const {
  if (input_height == 0 || input_width == 0 || input_height % 32 || input_width % 32) {
    fail(ErrorCode::InvalidConfig, "input size must be a positive multiple of 32 on both sides");
  }
  if (width.num == 0 || width.den == 0 || width.num > width.den) {
    fail(ErrorCode::InvalidConfig, "width multiplier must lie in (0, 1]");
  }
  for (std::size_t c : decoder_channels) {
    if (c == 0) fail(ErrorCode::InvalidConfig, "decoder channel counts must be positive");
  }
}

namespace {

/// Assembles the encoder blocks; every channel count passes through the width
/// multiplier.
template <typename T>
class Builder {
 public:
  Builder(ParameterStore<T>& store, Initializer& init, WidthMultiplier w, bool encoder)
      : store_(store), init_(init), w_(w), encoder_(encoder) {}

  std::size_t ch(std::size_t c) const { return w_.scale(c); }

  std::unique_ptr<ConvUnit<T>> conv(const std::string& name, std::size_t in, std::size_t out, std::size_t kh,
                                    std::size_t kw, std::size_t stride = 1) {
    ConvOptions o;
    o.kernel_h = kh;
    o.kernel_w = kw;
    o.stride = stride;
    return std::make_unique<ConvUnit<T>>(store_, init_, name, in, out, o, encoder_);
  }

  template <typename... M>
  std::unique_ptr<Sequential<T>> seq(M&&... modules) {
    auto s = std::make_unique<Sequential<T>>();
    (s->add(std::forward<M>(modules)), ...);
    return s;
  }

  std::unique_ptr<Module<T>> avg_pool_branch(const std::string& name, std::size_t in, std::size_t out) {
    return seq(std::make_unique<AvgPool<T>>(name + ".avgpool", 3, 1), conv(name, in, out, 1, 1));
  }

  // 1x1; 1x1 -> 5x5; 1x1 -> 3x3 -> 3x3; avg-pool -> 1x1
  std::unique_ptr<Module<T>> inception_a(const std::string& n, std::size_t in, std::size_t pool_features) {
    auto b = std::make_unique<Branches<T>>(n, in);
    b->add(conv(n + ".branch1x1", in, ch(64), 1, 1));
    b->add(seq(conv(n + ".branch5x5_1", in, ch(48), 1, 1), conv(n + ".branch5x5_2", ch(48), ch(64), 5, 5)));
    b->add(seq(conv(n + ".branch3x3dbl_1", in, ch(64), 1, 1), conv(n + ".branch3x3dbl_2", ch(64), ch(96), 3, 3),
               conv(n + ".branch3x3dbl_3", ch(96), ch(96), 3, 3)));
    b->add(avg_pool_branch(n + ".branch_pool", in, ch(pool_features)));
    return b;
  }

  // grid reduction to H/16: 3x3 s2; 1x1 -> 3x3 -> 3x3 s2; max-pool s2
  std::unique_ptr<Module<T>> inception_b(const std::string& n, std::size_t in) {
    auto b = std::make_unique<Branches<T>>(n, in);
    b->add(conv(n + ".branch3x3", in, ch(384), 3, 3, 2));
    b->add(seq(conv(n + ".branch3x3dbl_1", in, ch(64), 1, 1), conv(n + ".branch3x3dbl_2", ch(64), ch(96), 3, 3),
               conv(n + ".branch3x3dbl_3", ch(96), ch(96), 3, 3, 2)));
    b->add(std::make_unique<MaxPool<T>>(n + ".maxpool", 3, 2));
    return b;
  }

  // factorised 7x7 block
  std::unique_ptr<Module<T>> inception_c(const std::string& n, std::size_t in, std::size_t c7) {
    const std::size_t c = ch(c7);
    auto b = std::make_unique<Branches<T>>(n, in);
    b->add(conv(n + ".branch1x1", in, ch(192), 1, 1));
    b->add(seq(conv(n + ".branch7x7_1", in, c, 1, 1), conv(n + ".branch7x7_2", c, c, 1, 7),
               conv(n + ".branch7x7_3", c, ch(192), 7, 1)));
    b->add(seq(conv(n + ".branch7x7dbl_1", in, c, 1, 1), conv(n + ".branch7x7dbl_2", c, c, 7, 1),
               conv(n + ".branch7x7dbl_3", c, c, 1, 7), conv(n + ".branch7x7dbl_4", c, c, 7, 1),
               conv(n + ".branch7x7dbl_5", c, ch(192), 1, 7)));
    b->add(avg_pool_branch(n + ".branch_pool", in, ch(192)));
    return b;
  }

  // grid reduction to H/32
  std::unique_ptr<Module<T>> inception_d(const std::string& n, std::size_t in) {
    auto b = std::make_unique<Branches<T>>(n, in);
    b->add(seq(conv(n + ".branch3x3_1", in, ch(192), 1, 1), conv(n + ".branch3x3_2", ch(192), ch(320), 3, 3, 2)));
    b->add(seq(conv(n + ".branch7x7x3_1", in, ch(192), 1, 1), conv(n + ".branch7x7x3_2", ch(192), ch(192), 1, 7),
               conv(n + ".branch7x7x3_3", ch(192), ch(192), 7, 1),
               conv(n + ".branch7x7x3_4", ch(192), ch(192), 3, 3, 2)));
    b->add(std::make_unique<MaxPool<T>>(n + ".maxpool", 3, 2));
    return b;
  }

  // expanded 3x3 block: 1x1 -> (1x3 | 3x1), 1x1 -> 3x3 -> (1x3 | 3x1)
  std::unique_ptr<Module<T>> inception_e(const std::string& n, std::size_t in) {
    auto split = [&](const std::string& name, std::size_t c_in) {
      auto s = std::make_unique<Branches<T>>(name, c_in);
      s->add(conv(name + "a", c_in, ch(384), 1, 3));
      s->add(conv(name + "b", c_in, ch(384), 3, 1));
      return s;
    };
    auto b = std::make_unique<Branches<T>>(n, in);
    b->add(conv(n + ".branch1x1", in, ch(320), 1, 1));
    b->add(seq(conv(n + ".branch3x3_1", in, ch(384), 1, 1), split(n + ".branch3x3_2", ch(384))));
    b->add(seq(conv(n + ".branch3x3dbl_1", in, ch(448), 1, 1), conv(n + ".branch3x3dbl_2", ch(448), ch(384), 3, 3),
               split(n + ".branch3x3dbl_3", ch(384))));
    b->add(avg_pool_branch(n + ".branch_pool", in, ch(192)));
    return b;
  }

 private:
  ParameterStore<T>& store_;
  Initializer& init_;
  WidthMultiplier w_;
  bool encoder_;
};

}  // namespace

template <typename T>
Network<T>::Network(const NetworkConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  Initializer init(cfg_.seed);
  Builder<T> enc(params_, init, cfg_.width, true);
  const std::string p = "encoder.";

  encoder_[0] = enc.seq(enc.conv(p + "Conv2d_1a_3x3", 3, enc.ch(32), 3, 3, 2),
                        enc.conv(p + "Conv2d_2a_3x3", enc.ch(32), enc.ch(32), 3, 3),
                        enc.conv(p + "Conv2d_2b_3x3", enc.ch(32), enc.ch(64), 3, 3));
  taps_.skip[0] = encoder_[0]->out_channels(3);

  encoder_[1] = enc.seq(std::make_unique<MaxPool<T>>(p + "maxpool1", 3, 2),
                        enc.conv(p + "Conv2d_3b_1x1", taps_.skip[0], enc.ch(80), 1, 1),
                        enc.conv(p + "Conv2d_4a_3x3", enc.ch(80), enc.ch(192), 3, 3));
  taps_.skip[1] = encoder_[1]->out_channels(taps_.skip[0]);

  {
    auto s = std::make_unique<Sequential<T>>();
    s->add(std::make_unique<MaxPool<T>>(p + "maxpool2", 3, 2));
    std::size_t c = taps_.skip[1];
    const std::pair<const char*, std::size_t> blocks[] = {{"Mixed_5b", 32}, {"Mixed_5c", 64}, {"Mixed_5d", 64}};
    for (auto [name, pool] : blocks) {
      auto blk = enc.inception_a(p + name, c, pool);
      c = blk->out_channels(c);
      s->add(std::move(blk));
    }
    encoder_[2] = std::move(s);
    taps_.skip[2] = c;
  }
  {
    auto s = std::make_unique<Sequential<T>>();
    std::size_t c = taps_.skip[2];
    auto red = enc.inception_b(p + "Mixed_6a", c);
    c = red->out_channels(c);
    s->add(std::move(red));
    const std::pair<const char*, std::size_t> blocks[] = {
        {"Mixed_6b", 128}, {"Mixed_6c", 160}, {"Mixed_6d", 160}, {"Mixed_6e", 192}};
    for (auto [name, c7] : blocks) {
      auto blk = enc.inception_c(p + name, c, c7);
      c = blk->out_channels(c);
      s->add(std::move(blk));
    }
    encoder_[3] = std::move(s);
    taps_.skip[3] = c;
  }
  {
    auto s = std::make_unique<Sequential<T>>();
    std::size_t c = taps_.skip[3];
    auto red = enc.inception_d(p + "Mixed_7a", c);
    c = red->out_channels(c);
    s->add(std::move(red));
    for (const char* name : {"Mixed_7b", "Mixed_7c"}) {
      auto blk = enc.inception_e(p + name, c);
      c = blk->out_channels(c);
      s->add(std::move(blk));
    }
    encoder_[4] = std::move(s);
    taps_.bottleneck = c;
  }

  Builder<T> dec(params_, init, cfg_.width, false);
  const std::array<std::size_t, 5> skips{taps_.skip[3], taps_.skip[2], taps_.skip[1], taps_.skip[0], 3};
  std::size_t in = taps_.bottleneck;
  for (std::size_t k = 0; k < 5; ++k) {
    const std::string n = "decoder.stage" + std::to_string(k + 1);
    const std::size_t c = dec.ch(cfg_.decoder_channels[k]);
    DecoderStage& st = decoder_[k];
    st.up = std::make_unique<UpConv<T>>(params_, init, n + ".up", in, c, false);
    st.up_channels = c;
    st.skip_channels = skips[k];
    st.convs = dec.seq(dec.conv(n + ".conv1", c + skips[k], c, 3, 3), dec.conv(n + ".conv2", c, c, 3, 3));
    in = c;
  }
  ConvOptions head;
  head.kernel_h = head.kernel_w = 1;
  head.bias = true;
  head.batch_norm = false;
  head.relu = false;
  head_ = std::make_unique<ConvUnit<T>>(params_, init, "decoder.head", in, 1, head, false);

  set_encoder_frozen(cfg_.freeze_encoder);
}

template <typename T>
void Network<T>::check_input(const Tensor<T>& batch) const {
  if (batch.rank() != 4 || batch.batch() == 0 || batch.channels() != 3 || batch.height() != cfg_.input_height ||
      batch.width() != cfg_.input_width) {
    fail(ErrorCode::ShapeMismatch, "network expects (B, 3, " + std::to_string(cfg_.input_height) + ", " +
                                       std::to_string(cfg_.input_width) + "), got " + format_dims(batch.dims()));
  }
}

template <typename T>
typename Network<T>::Pass Network<T>::run(const Tensor<T>& batch, Context<T>& ctx) const {
  check_input(batch);
  Pass pass;
  const bool record = ctx.record;
  ctx.record = record && encoder_trainable();
  Tensor<T> h = batch;
  for (std::size_t k = 0; k < 5; ++k) {
    h = encoder_[k]->forward(h, ctx);
    pass.trace.encoder[k] = h.dims();
    if (k < 4) pass.skips[k] = h;
  }
  ctx.record = record;

  for (std::size_t k = 0; k < 5; ++k) {
    const DecoderStage& st = decoder_[k];
    const Tensor<T>& skip = k < 4 ? pass.skips[3 - k] : batch;
    Tensor<T> up = st.up->forward(h, ctx);
    pass.trace.up_channels[k] = up.channels();
    pass.trace.skip_channels[k] = skip.channels();
    Tensor<T> cat = ops::concat_channels<T>({&up, &skip});
    pass.trace.concat_channels[k] = cat.channels();
    h = st.convs->forward(cat, ctx);
    pass.trace.decoder[k] = h.dims();
  }
  pass.probabilities = ops::sigmoid(head_->forward(h, ctx));
  return pass;
}

template <typename T>
Tensor<T> Network<T>::forward(const Tensor<T>& batch) const {
  return forward(batch, false);
}

template <typename T>
Tensor<T> Network<T>::forward(const Tensor<T>& batch, bool training) const {
  Context<T> ctx(params_);
  ctx.training = training;
  return run(batch, ctx).probabilities;
}

template <typename T>
double Network<T>::loss(const Tensor<T>& batch, std::span<const std::uint8_t> targets, bool training) const {
  Tensor<T> p = forward(batch, training);
  return train::bce_loss<T>(p.values(), targets);
}

template <typename T>
LossAndGradients<T> Network<T>::gradients(const Tensor<T>& batch, std::span<const std::uint8_t> targets,
                                          bool training) const {
  Context<T> ctx(params_);
  ctx.training = training;
  ctx.record = true;
  Pass pass = run(batch, ctx);

  LossAndGradients<T> out;
  out.loss = train::bce_loss<T>(pass.probabilities.values(), targets);
  out.gradients = GradientSet<T>(params_);

  Tensor<T> dlogits(pass.probabilities.dims());
  train::bce_logit_gradient<T>(pass.probabilities.values(), targets, dlogits.values());

  const bool into_encoder = encoder_trainable();
  Tensor<T> dh = head_->backward(dlogits, ctx, out.gradients, true);
  std::array<Tensor<T>, 4> dskips;
  for (std::size_t k = 5; k-- > 0;) {
    const DecoderStage& st = decoder_[k];
    Tensor<T> dcat = st.convs->backward(dh, ctx, out.gradients, true);
    auto parts = ops::split_channels(dcat, {st.up_channels, st.skip_channels});
    dh = st.up->backward(parts[0], ctx, out.gradients, k > 0 || into_encoder);
    if (k < 4) dskips[3 - k] = std::move(parts[1]);
  }

  if (into_encoder) {
    for (std::size_t k = 5; k-- > 0;) {
      if (k < 4) ops::add_inplace(dh, dskips[k]);
      dh = encoder_[k]->backward(dh, ctx, out.gradients, k > 0);
    }
  }
  out.running_stats = std::move(ctx.stats);
  return out;
}

template <typename T>
void Network<T>::apply_running_stats(const std::vector<StatUpdate<T>>& updates, double momentum) {
  const T m = static_cast<T>(momentum);
  for (const auto& u : updates) {
    auto& mean = params_[u.mean].value;
    auto& var = params_[u.var].value;
    for (std::size_t c = 0; c < mean.size(); ++c) {
      mean[c] = (T(1) - m) * mean[c] + m * u.batch_mean[c];
      var[c] = (T(1) - m) * var[c] + m * u.batch_var[c];
    }
  }
}

template <typename T>
void Network<T>::set_encoder_frozen(bool frozen) {
  cfg_.freeze_encoder = frozen;
  for (auto& p : params_) {
    if (p.encoder && p.role == ParamRole::Weight) p.trainable = !frozen;
  }
}

template <typename T>
bool Network<T>::encoder_trainable() const {
  for (const auto& p : params_) {
    if (p.encoder && p.learnable()) return true;
  }
  return false;
}

template <typename T>
ShapeTrace Network<T>::trace_shapes(const Tensor<T>& batch) const {
  Context<T> ctx(params_);
  return run(batch, ctx).trace;
}

template <typename T>
std::vector<LayerInfo> Network<T>::layers() const {
  std::vector<LayerInfo> out;
  for (const auto& e : encoder_) e->describe(out);
  for (std::size_t k = 0; k < 5; ++k) {
    decoder_[k].up->describe(out);
    out.push_back({LayerKind::Concatenation, "decoder.stage" + std::to_string(k + 1) + ".concat",
                   decoder_[k].up_channels + decoder_[k].skip_channels});
    decoder_[k].convs->describe(out);
  }
  head_->describe(out);
  out.push_back({LayerKind::Sigmoid, "decoder.head.sigmoid", 1});
  return out;
}

template class Network<float>;
template class Network<double>;

}  // namespace lungseg::nn
