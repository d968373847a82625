#include "canseg/fine.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace canseg {

void FineConfig::validate() const {
  if (in_channels != 2) throw std::invalid_argument("fine: in_channels must be 2");
  if (classes != 2) throw std::invalid_argument("fine: classes must be 2");
  if (depth < 2) throw std::invalid_argument("fine: depth must be >= 2");
  if (base_filters < 1) throw std::invalid_argument("fine: base_filters must be >= 1");
  if (se_reduction < 1) throw std::invalid_argument("fine: se_reduction must be >= 1");
  if (base_filters < se_reduction)
    throw std::invalid_argument("fine: base_filters must be >= se_reduction");
  if (!(dropout_p >= 0.0 && dropout_p < 1.0))
    throw std::invalid_argument("fine: dropout_p must be in [0,1)");
  if (epochs < 0) throw std::invalid_argument("fine: negative epoch count");
  if (batch_size != 1) throw std::invalid_argument("fine: batch_size must be 1");
  if (!(lr_init > 0)) throw std::invalid_argument("fine: lr_init must be > 0");
  if (!(plateau_factor > 0 && plateau_factor < 1))
    throw std::invalid_argument("fine: plateau_factor must be in (0,1)");
  if (plateau_patience < 1 || early_stop_patience < 1)
    throw std::invalid_argument("fine: patience values must be >= 1");
}

namespace {

int level_width(const FineConfig& cfg, int level) { return cfg.base_filters << level; }

}  // namespace

FineModel build_fine(const FineConfig& cfg) {
  cfg.validate();
  FineModel m;
  m.cfg = cfg;
  m.dropout_rng.seed(cfg.rng_seed ^ 0x9e3779b97f4a7c15ull);
  std::mt19937_64 rng(cfg.rng_seed);

  auto conv = [&](const std::string& name, int ci, int co, int k) {
    FineModel::Conv c;
    const float std = std::sqrt(2.f / float(ci * k * k * k));
    c.w = nn::param_randn({co, ci, k, k, k}, std, rng, name + ".w");
    c.b = nn::param({co}, name + ".b");
    c.gamma = nn::param({co}, name + ".gamma");
    std::fill(c.gamma.n->value.begin(), c.gamma.n->value.end(), 1.f);
    c.beta = nn::param({co}, name + ".beta");
    m.params.add(c.w);
    m.params.add(c.b);
    m.params.add(c.gamma);
    m.params.add(c.beta);
    return c;
  };
  auto make_se = [&](const std::string& name, int channels) {
    FineModel::Se se;
    const int mid = std::max(1, channels / cfg.se_reduction);
    se.w1 = nn::param_randn({mid, channels, 1, 1, 1}, std::sqrt(2.f / float(channels)), rng,
                            name + ".fc1.w");
    se.b1 = nn::param({mid}, name + ".fc1.b");
    se.w2 = nn::param_randn({channels, mid, 1, 1, 1}, std::sqrt(2.f / float(mid)), rng,
                            name + ".fc2.w");
    se.b2 = nn::param({channels}, name + ".fc2.b");
    m.params.add(se.w1);
    m.params.add(se.b1);
    m.params.add(se.w2);
    m.params.add(se.b2);
    return se;
  };

  const int d = cfg.depth;
  m.in_conv = conv("enc0.in", cfg.in_channels, level_width(cfg, 0), 3);
  for (int l = 0; l < d; ++l) {
    const int w = level_width(cfg, l);
    std::string base = "enc" + std::to_string(l) + ".ctx";
    m.ctx.push_back({conv(base + "1", w, w, 3), conv(base + "2", w, w, 3)});
    if (l + 1 < d)
      m.down.push_back(
          conv("enc" + std::to_string(l + 1) + ".down", w, level_width(cfg, l + 1), 3));
  }
  m.se_enc = make_se("enc" + std::to_string(d - 2) + ".se", level_width(cfg, d - 2));

  for (int l = d - 2; l >= 0; --l)
    m.up.push_back(conv("dec" + std::to_string(l) + ".up", level_width(cfg, l + 1),
                        level_width(cfg, l), 3));
  m.se_dec = make_se("dec" + std::to_string(d - 2) + ".se", level_width(cfg, d - 2));

  for (int l = d - 2; l >= 1; --l) {
    const int w = level_width(cfg, l);
    std::string base = "dec" + std::to_string(l) + ".loc";
    m.loc.push_back({conv(base + "1", 2 * w, w, 3), conv(base + "2", w, w, 1)});
  }
  m.out_conv = conv("dec0.out", 2 * level_width(cfg, 0), 2 * level_width(cfg, 0), 3);

  auto head = [&](const std::string& name, int ci, nn::Tensor& w, nn::Tensor& b) {
    w = nn::param_randn({cfg.classes, ci, 1, 1, 1}, std::sqrt(2.f / float(ci)), rng,
                        name + ".w");
    b = nn::param({cfg.classes}, name + ".b");
    m.params.add(w);
    m.params.add(b);
  };
  head("seg.mid", level_width(cfg, d - 2), m.seg_mid_w, m.seg_mid_b);
  head("seg.low", level_width(cfg, d - 3 >= 0 ? d - 3 : 0), m.seg_low_w, m.seg_low_b);
  head("seg.final", 2 * level_width(cfg, 0), m.seg_final_w, m.seg_final_b);
  return m;
}

namespace {

nn::Tensor conv_in_lrelu(const FineModel::Conv& c, const nn::Tensor& x, int stride, int pad) {
  return nn::leaky_relu(nn::instance_norm(nn::conv3d(x, c.w, c.b, stride, pad), c.gamma, c.beta),
                        0.02f);
}

}  // namespace

nn::Tensor FineModel::forward(const nn::Tensor& x, const FineForwardOpts& opts) const {
  if (x.shape().size() != 4 || x.shape()[0] != cfg.in_channels)
    throw std::invalid_argument("fine: expected a (2,N,N,N) input");
  const int n = x.shape()[1];
  if (x.shape()[2] != n || x.shape()[3] != n)
    throw std::invalid_argument("fine: input must be cubic");
  if (n % (1 << (cfg.depth - 1)) != 0)
    throw std::invalid_argument("fine: input extent must be divisible by 2^(depth-1)");

  auto context = [&](const std::array<Conv, 2>& blk, const nn::Tensor& in) {
    nn::Tensor y = conv_in_lrelu(blk[0], in, 1, 1);
    y = nn::dropout(y, float(cfg.dropout_p), dropout_rng, opts.training);
    y = conv_in_lrelu(blk[1], y, 1, 1);
    return nn::add(in, y);  // residual around the two-conv block
  };
  auto se_gate = [&](const Se& se, const nn::Tensor& in) {
    if (opts.se_identity) return in;  // gate is purely multiplicative
    if (opts.force_gate_value >= 0.f)
      return nn::scale_channels(in, nn::full({in.shape()[0], 1, 1, 1}, opts.force_gate_value));
    nn::Tensor g = nn::global_avg_pool(in);
    g = nn::leaky_relu(nn::conv3d(g, se.w1, se.b1, 1, 0), 0.f);
    g = nn::sigmoid(nn::conv3d(g, se.w2, se.b2, 1, 0));
    return nn::scale_channels(in, g);
  };

  // Encoder.
  const int d = cfg.depth;
  std::vector<nn::Tensor> skips;
  nn::Tensor cur = conv_in_lrelu(in_conv, x, 1, 1);
  for (int l = 0; l < d; ++l) {
    cur = context(ctx[std::size_t(l)], cur);
    if (l == d - 2) cur = se_gate(se_enc, cur);  // after the penultimate context block
    if (l + 1 < d) {
      skips.push_back(cur);
      cur = conv_in_lrelu(down[std::size_t(l)], cur, 2, 1);
    }
  }

  // Decoder with deep supervision at the two coarsest outputs.
  nn::Tensor seg_mid, seg_low;
  for (int i = 0; i < d - 1; ++i) {
    const int level = d - 2 - i;
    nn::Tensor upsampled = conv_in_lrelu(up[std::size_t(i)], nn::upsample_trilinear2x(cur), 1, 1);
    if (i == 0) upsampled = se_gate(se_dec, upsampled);  // after the first upsampling block
    cur = nn::concat_c(upsampled, skips[std::size_t(level)]);
    if (level >= 1) {
      const auto& blk = loc[std::size_t(i)];
      cur = conv_in_lrelu(blk[0], cur, 1, 1);
      cur = conv_in_lrelu(blk[1], cur, 1, 0);
      if (level == d - 2) seg_mid = nn::conv3d(cur, seg_mid_w, seg_mid_b, 1, 0);
      if (level == d - 3) seg_low = nn::conv3d(cur, seg_low_w, seg_low_b, 1, 0);
    } else {
      cur = conv_in_lrelu(out_conv, cur, 1, 1);
    }
  }

  nn::Tensor logits = nn::conv3d(cur, seg_final_w, seg_final_b, 1, 0);
  if (!opts.disable_aux && seg_mid.defined() && seg_low.defined()) {
    nn::Tensor aux = nn::upsample_trilinear2x(nn::add(nn::upsample_trilinear2x(seg_mid), seg_low));
    logits = nn::add(logits, aux);
  }
  return nn::softmax_c(logits);
}

nn::Tensor voi_to_tensor(const VoiCrop& sample) {
  const Int3 d = sample.image_channel.dims;
  if (sample.contour_channel.dims != d || sample.label.dims != d)
    throw std::invalid_argument("voi_to_tensor: channel geometry mismatch");
  nn::Tensor x = nn::zeros({2, d[2], d[1], d[0]});
  std::copy(sample.image_channel.data.begin(), sample.image_channel.data.end(), x.data());
  std::copy(sample.contour_channel.data.begin(), sample.contour_channel.data.end(),
            x.data() + sample.image_channel.data.size());
  return x;
}

FineTrainResult train_fine(FineModel& model, const std::vector<VoiCrop>& train,
                           const std::vector<VoiCrop>& val, const LossParams& loss,
                           const FineConfig& cfg) {
  cfg.validate();
  loss.validate();
  if (train.empty() || val.empty())
    throw std::invalid_argument("train_fine: train and val must be nonempty");

  nn::Adam opt(model.params);
  std::mt19937_64 order_rng(cfg.rng_seed + 17);
  FineTrainResult res;
  double lr = cfg.lr_init;
  int plateau = 0, since_best = 0;
  std::vector<std::vector<float>> best_params;

  auto snapshot = [&]() {
    best_params.clear();
    for (auto& [_, p] : model.params.items) best_params.push_back(p->value);
  };
  // Validation criterion: negative soft dice. The raw weighted-loss value is
  // non-monotone in dice (it turns back toward 0 as dice improves past
  // 1/(1+beta)), so it cannot drive plateau/early-stop/best-model selection.
  // Coincides with the weighted loss at beta = 0.
  auto eval_val = [&]() {
    nn::NoGradGuard guard;
    double sum = 0;
    for (const auto& s : val) {
      nn::Tensor probs = model.forward(voi_to_tensor(s), {});
      sum -= soft_dice(std::span<const std::uint8_t>(s.label.data.data(), s.label.data.size()),
                       std::span<const float>(probs.data() + probs.size() / 2, probs.size() / 2),
                       loss.smooth);
    }
    return sum / double(val.size());
  };

  std::vector<std::size_t> order(train.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), order_rng);
    double train_sum = 0;
    for (std::size_t idx : order) {
      const auto& s = train[idx];
      model.params.zero_grad();
      nn::Tensor probs = model.forward(voi_to_tensor(s), {.training = true});
      nn::Tensor l = wdl_loss(probs, s.label.data.data(), loss);
      train_sum += l.data()[0];
      if (!std::isfinite(l.data()[0]))
        throw std::runtime_error("train_fine: non-finite loss at epoch " +
                                 std::to_string(epoch));
      nn::backward(l);
      opt.step(float(lr));
    }
    const double train_loss = train_sum / double(train.size());
    const double val_loss = eval_val();
    if (!std::isfinite(val_loss))
      throw std::runtime_error("train_fine: non-finite validation loss at epoch " +
                               std::to_string(epoch));
    res.log.push_back({epoch, train_loss, val_loss, lr});

    if (res.best_epoch < 0 || val_loss < res.best_val) {
      res.best_val = val_loss;
      res.best_epoch = epoch;
      plateau = 0;
      since_best = 0;
      snapshot();
    } else {
      ++plateau;
      ++since_best;
      if (plateau >= cfg.plateau_patience) {
        lr *= cfg.plateau_factor;
        plateau = 0;
      }
      if (since_best >= cfg.early_stop_patience) {
        res.early_stopped = true;
        break;
      }
    }
  }

  if (!best_params.empty())
    for (std::size_t i = 0; i < model.params.items.size(); ++i)
      model.params.items[i].second->value = best_params[i];
  return res;
}

Volume3D predict_fine_prob(const FineModel& model, const VoiCrop& sample) {
  nn::NoGradGuard guard;
  nn::Tensor probs = model.forward(voi_to_tensor(sample), {});
  Volume3D out(sample.image_channel.dims, 0.f);
  out.spacing = sample.image_channel.spacing;
  out.origin = sample.image_channel.origin;
  std::copy(probs.data() + probs.size() / 2, probs.data() + probs.size(), out.data.begin());
  return out;
}

LabelVolume predict_fine(const FineModel& model, const VoiCrop& sample) {
  Volume3D prob = predict_fine_prob(model, sample);
  LabelVolume out(prob.dims, 0);
  out.spacing = prob.spacing;
  out.origin = prob.origin;
  for (std::size_t i = 0; i < prob.data.size(); ++i)
    out.data[i] = prob.data[i] > 0.5f;  // p_fg == p_bg ties resolve to background
  return out;
}

}  // namespace canseg
