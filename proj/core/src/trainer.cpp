#include "pbnn/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

namespace pbnn::train {

namespace {

float logisticf(float t) { return 1.0f / (1.0f + std::exp(-t)); }

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

// float im2col over a batch chunk; maps travel as (channels x items*positions)
void im2col_chunk(const Eigen::MatrixXf& in, int items, int h, int w, int k,
                  Eigen::MatrixXf& out) {
    const int c = static_cast<int>(in.rows());
    const int ho = h - k + 1;
    const int wo = w - k + 1;
    out.resize(c * k * k, static_cast<Eigen::Index>(items) * ho * wo);
    for (int t = 0; t < items; ++t) {
        const int in_base = t * h * w;
        const int out_base = t * ho * wo;
        for (int y = 0; y < ho; ++y) {
            for (int x = 0; x < wo; ++x) {
                const int col = out_base + y * wo + x;
                for (int ch = 0; ch < c; ++ch) {
                    for (int dy = 0; dy < k; ++dy) {
                        for (int dx = 0; dx < k; ++dx) {
                            out(ch * k * k + dy * k + dx, col) =
                                in(ch, in_base + (y + dy) * w + (x + dx));
                        }
                    }
                }
            }
        }
    }
}

void col2im_chunk(const Eigen::MatrixXf& cols, int items, int h, int w, int k,
                  Eigen::MatrixXf& out, int channels) {
    const int ho = h - k + 1;
    const int wo = w - k + 1;
    out.setZero(channels, static_cast<Eigen::Index>(items) * h * w);
    for (int t = 0; t < items; ++t) {
        const int out_base = t * h * w;
        const int in_base = t * ho * wo;
        for (int y = 0; y < ho; ++y) {
            for (int x = 0; x < wo; ++x) {
                const int col = in_base + y * wo + x;
                for (int ch = 0; ch < channels; ++ch) {
                    for (int dy = 0; dy < k; ++dy) {
                        for (int dx = 0; dx < k; ++dx) {
                            out(ch, out_base + (y + dy) * w + (x + dx)) +=
                                cols(ch * k * k + dy * k + dx, col);
                        }
                    }
                }
            }
        }
    }
}

struct StageBuffers {
    Eigen::MatrixXf patches, patches_sq;
    Eigen::MatrixXf sd, eps, z;       // scaled domain
    Eigen::MatrixXf pooled_z, activ;  // activ feeds the next stage
    std::vector<int> pool_winner;     // pre-pool column per pooled column
    Eigen::MatrixXf dz, dinput;
    bool in_bipolar = false;
};

struct ChunkWork {
    std::vector<StageBuffers> stages;
    std::vector<Eigen::MatrixXf> grads;
    double loss = 0.0;
};

void max_pool_chunk(const Eigen::MatrixXf& z, int items, int h, int w,
                    Eigen::MatrixXf& out, std::vector<int>& winner) {
    const int c = static_cast<int>(z.rows());
    const int ho = h / 2;
    const int wo = w / 2;
    out.resize(c, static_cast<Eigen::Index>(items) * ho * wo);
    winner.assign(static_cast<size_t>(c) * items * ho * wo, 0);
    for (int t = 0; t < items; ++t) {
        for (int y = 0; y < ho; ++y) {
            for (int x = 0; x < wo; ++x) {
                const int col = t * ho * wo + y * wo + x;
                const int base = t * h * w;
                const int c00 = base + (2 * y) * w + 2 * x;
                const int c01 = c00 + 1;
                const int c10 = base + (2 * y + 1) * w + 2 * x;
                const int c11 = c10 + 1;
                for (int ch = 0; ch < c; ++ch) {
                    int best = c00;
                    float v = z(ch, c00);
                    if (z(ch, c01) > v) { v = z(ch, c01); best = c01; }
                    if (z(ch, c10) > v) { v = z(ch, c10); best = c10; }
                    if (z(ch, c11) > v) { v = z(ch, c11); best = c11; }
                    out(ch, col) = v;
                    winner[static_cast<size_t>(ch) * items * ho * wo + col] = best;
                }
            }
        }
    }
}

}  // namespace

void TrainConfig::validate() const {
    if (epochs < 0) throw std::invalid_argument("train: epochs must be >= 0");
    if (batch_size < 1) throw std::invalid_argument("train: batch size must be >= 1");
    if (!(learning_rate > 0.0)) throw std::invalid_argument("train: learning rate must be positive");
    if (grad_chunks < 1) throw std::invalid_argument("train: grad_chunks must be >= 1");
}

CltNet::CltNet(const net::Architecture& arch, WeightMode mode, const TrainConfig& config)
    : arch_(arch), mode_(mode), config_(config), noise_scale_(config.sigma_scale) {
    const auto dims = net::trace_dims(arch);
    net::Shape3 cur = arch.input;
    for (int i = 0; i < static_cast<int>(arch.layers.size()); ++i) {
        const auto& l = arch.layers[i];
        if (l.has_weights()) {
            CltStage st;
            st.is_conv = l.kind == net::LayerKind::Conv;
            st.in_c = cur.c;
            st.in_h = cur.h;
            st.in_w = cur.w;
            if (st.is_conv) {
                st.kernel = l.kernel;
                st.fan_in = cur.c * l.kernel * l.kernel;
                st.fan_out = l.out_channels;
                st.out_h = cur.h - l.kernel + 1;
                st.out_w = cur.w - l.kernel + 1;
            } else {
                st.fan_in = l.in;
                st.fan_out = l.out;
            }
            if (i + 1 < static_cast<int>(arch.layers.size()) &&
                arch.layers[i + 1].kind == net::LayerKind::MaxPool) {
                st.pooled = true;
            }
            st.alpha = 1.0f / std::sqrt(static_cast<float>(st.fan_in));
            stages_.push_back(std::move(st));
        }
        cur = dims[i];
    }
    if (stages_.empty()) throw std::invalid_argument("trainer: no weighted layers");
    stages_.back().sign_output = false;

    for (size_t s = 0; s < stages_.size(); ++s) {
        auto& st = stages_[s];
        Rng rng(derive_seed(config_.seed, 0x696e6974, s));
        st.theta.resize(st.fan_in, st.fan_out);
        for (int j = 0; j < st.fan_out; ++j) {
            for (int i = 0; i < st.fan_in; ++i) {
                st.theta(i, j) = static_cast<float>(
                    config_.init_spread * (2.0 * rng.uniform01() - 1.0));
            }
        }
        st.adam_m = Eigen::MatrixXf::Zero(st.fan_in, st.fan_out);
        st.adam_v = Eigen::MatrixXf::Zero(st.fan_in, st.fan_out);
    }
}

namespace {

// weight views for one stage under the current mode
struct StageWeights {
    Eigen::MatrixXf w_eff;  // alpha * (2p-1)  or  alpha * sign(theta)
    Eigen::MatrixXf prob;   // logistic(theta), stochastic mode only
    Eigen::MatrixXf var_w;  // 4 p (1-p), stochastic mode only
};

StageWeights stage_weights(const CltStage& st, WeightMode mode) {
    StageWeights w;
    if (mode == WeightMode::Stochastic) {
        w.prob = st.theta.unaryExpr([](float t) { return logisticf(t); });
        w.w_eff = (st.alpha * (2.0f * w.prob.array() - 1.0f)).matrix();
        w.var_w = (4.0f * w.prob.array() * (1.0f - w.prob.array())).matrix();
    } else {
        w.w_eff = st.theta.unaryExpr([a = st.alpha](float t) { return t > 0.0f ? a : -a; });
    }
    return w;
}

}  // namespace

double CltNet::forward_backward(const Eigen::MatrixXf& images,
                                const std::vector<uint8_t>& labels, uint64_t noise_seed,
                                std::vector<Eigen::MatrixXf>& grads) {
    const int nb = static_cast<int>(images.cols());
    if (nb != static_cast<int>(labels.size())) {
        throw std::invalid_argument("trainer: image/label count mismatch");
    }
    const int n_chunks = std::min(config_.grad_chunks, nb);
    const bool stochastic = mode_ == WeightMode::Stochastic;
    const float clip = static_cast<float>(config_.ste_clip);
    const float div_floor = static_cast<float>(config_.sigma_div_floor);
    const float logit_scale = static_cast<float>(config_.logit_scale);
    const float sigma_scale = static_cast<float>(noise_scale_);

    std::vector<StageWeights> weights(stages_.size());
    for (size_t s = 0; s < stages_.size(); ++s) weights[s] = stage_weights(stages_[s], mode_);

    static thread_local std::vector<ChunkWork> pool;  // reused across batches
    std::vector<ChunkWork>& work = pool;
    work.resize(n_chunks);

#pragma omp parallel for schedule(dynamic)
    for (int c = 0; c < n_chunks; ++c) {
        ChunkWork& wk = work[c];
        wk.stages.resize(stages_.size());
        wk.grads.assign(stages_.size(), Eigen::MatrixXf());
        const int first = c * nb / n_chunks;
        const int last = (c + 1) * nb / n_chunks;
        const int items = last - first;
        Rng rng(derive_seed(noise_seed, c));

        // ---- forward ----
        Eigen::MatrixXf input = images.middleCols(first, items);  // 784 x items
        // reshape to (channels x items*h*w): single input channel assumed square
        Eigen::MatrixXf cur(arch_.input.c,
                            static_cast<Eigen::Index>(items) * arch_.input.h * arch_.input.w);
        {
            const int hw = arch_.input.h * arch_.input.w;
            for (int t = 0; t < items; ++t) {
                for (int ch = 0; ch < arch_.input.c; ++ch) {
                    cur.block(ch, static_cast<Eigen::Index>(t) * hw, 1, hw) =
                        input.col(t).segment(static_cast<Eigen::Index>(ch) * hw, hw).transpose();
                }
            }
        }
        int cur_h = arch_.input.h, cur_w = arch_.input.w;

        for (size_t s = 0; s < stages_.size(); ++s) {
            const CltStage& st = stages_[s];
            StageBuffers& buf = wk.stages[s];
            buf.in_bipolar = s > 0 && stages_[s - 1].sign_output;
            if (st.is_conv) {
                im2col_chunk(cur, items, cur_h, cur_w, st.kernel, buf.patches);
            } else {
                // flatten (c x items*1) -> (fan_in x items)
                buf.patches.resize(st.fan_in, items);
                const int hw = st.in_h * st.in_w;
                for (int t = 0; t < items; ++t) {
                    for (int ch = 0; ch < st.in_c; ++ch) {
                        buf.patches.col(t).segment(static_cast<Eigen::Index>(ch) * hw, hw) =
                            cur.block(ch, static_cast<Eigen::Index>(t) * hw, 1, hw).transpose();
                    }
                }
            }
            buf.z.noalias() = weights[s].w_eff.transpose() * buf.patches;
            if (stochastic) {
                const float a2 = st.alpha * st.alpha;
                if (buf.in_bipolar) {
                    // inputs are +-1: the variance term is constant per output
                    Eigen::VectorXf s2 = a2 * weights[s].var_w.colwise().sum().transpose();
                    buf.sd = s2.array().sqrt().matrix().replicate(1, buf.z.cols());
                } else {
                    buf.patches_sq = buf.patches.cwiseProduct(buf.patches);
                    buf.sd.noalias() = weights[s].var_w.transpose() * buf.patches_sq;
                    buf.sd = (a2 * buf.sd.array()).sqrt().matrix();
                }
                if (sigma_scale != 1.0f) buf.sd *= sigma_scale;
                buf.eps.resize(buf.z.rows(), buf.z.cols());
                for (Eigen::Index col = 0; col < buf.eps.cols(); ++col) {
                    for (Eigen::Index row = 0; row < buf.eps.rows(); ++row) {
                        buf.eps(row, col) = static_cast<float>(rng.normal());
                    }
                }
                buf.z += buf.sd.cwiseProduct(buf.eps);
            }
            int h = st.out_h, w = st.out_w;
            if (st.pooled) {
                max_pool_chunk(buf.z, items, h, w, buf.pooled_z, buf.pool_winner);
                h /= 2;
                w /= 2;
            } else {
                buf.pooled_z = buf.z;
            }
            if (st.sign_output) {
                buf.activ = buf.pooled_z.unaryExpr(
                    [](float v) { return v > 0.0f ? 1.0f : -1.0f; });
            } else {
                buf.activ = buf.pooled_z;  // smooth passthrough (head, FD toys)
            }
            if (s + 1 < stages_.size()) {
                cur = buf.activ;
                cur_h = h;
                cur_w = w;
            }
        }

        // ---- softmax cross-entropy on the final pre-activations ----
        const StageBuffers& head = wk.stages.back();
        const int n_classes = static_cast<int>(head.pooled_z.rows());
        Eigen::MatrixXf dlogits(n_classes, items);
        double loss = 0.0;
        for (int t = 0; t < items; ++t) {
            Eigen::VectorXf logits = logit_scale * head.pooled_z.col(t);
            const float zmax = logits.maxCoeff();
            Eigen::VectorXf e = (logits.array() - zmax).exp();
            const float denom = e.sum();
            const int y = labels[first + t];
            loss -= std::log(std::max(e[y] / denom, 1e-30f));
            dlogits.col(t) = e / denom;
            dlogits(y, t) -= 1.0f;
        }
        wk.loss = loss;

        // ---- backward ----
        Eigen::MatrixXf dnext = (logit_scale / static_cast<float>(nb)) * dlogits;
        for (int s = static_cast<int>(stages_.size()) - 1; s >= 0; --s) {
            const CltStage& st = stages_[s];
            StageBuffers& buf = wk.stages[s];
            Eigen::MatrixXf dpooled;
            if (st.sign_output) {
                dpooled = dnext.cwiseProduct(buf.pooled_z.unaryExpr(
                    [clip](float v) { return std::abs(v) <= clip ? 1.0f : 0.0f; }));
            } else {
                dpooled = dnext;
            }
            if (st.pooled) {
                buf.dz.setZero(buf.z.rows(), buf.z.cols());
                const Eigen::Index pooled_cols = dpooled.cols();
                for (Eigen::Index ch = 0; ch < dpooled.rows(); ++ch) {
                    for (Eigen::Index col = 0; col < pooled_cols; ++col) {
                        buf.dz(ch, buf.pool_winner[static_cast<size_t>(ch) * pooled_cols + col]) +=
                            dpooled(ch, col);
                    }
                }
            } else {
                buf.dz = std::move(dpooled);
            }

            const float a = st.alpha;
            Eigen::MatrixXf& g = buf.dz;  // fan_out x cols
            if (stochastic) {
                // h = dL/d(sigma2_scaled); buf.sd carries the sigma_scale
                // factor, so the chain rule needs sigma_scale^2 on top
                const float var_route = config_.variance_gradient ? 1.0f : 0.0f;
                Eigen::MatrixXf hmat =
                    ((var_route * sigma_scale * sigma_scale) * g.array() * buf.eps.array() *
                     0.5 / buf.sd.array().max(div_floor))
                        .matrix();
                Eigen::MatrixXf dw_raw;
                dw_raw.noalias() = buf.patches * g.transpose();
                Eigen::MatrixXf dvw_raw;
                if (buf.in_bipolar) {
                    dvw_raw = Eigen::VectorXf::Ones(st.fan_in) *
                              hmat.rowwise().sum().transpose();
                } else {
                    dvw_raw.noalias() = buf.patches_sq * hmat.transpose();
                }
                const float a2 = a * a;
                const auto& p = weights[s].prob;
                Eigen::MatrixXf dp =
                    (2.0f * a * dw_raw.array() +
                     a2 * (4.0f - 8.0f * p.array()) * dvw_raw.array())
                        .matrix();
                wk.grads[s] = (dp.array() * p.array() * (1.0f - p.array())).matrix();
                if (s > 0) {
                    Eigen::MatrixXf dpatches;
                    dpatches.noalias() = weights[s].w_eff * g;
                    Eigen::MatrixXf var_h;
                    var_h.noalias() = weights[s].var_w * hmat;
                    dpatches += (2.0f * a2) * buf.patches.cwiseProduct(var_h);
                    buf.dinput = std::move(dpatches);
                }
            } else {
                Eigen::MatrixXf dw_raw;
                dw_raw.noalias() = buf.patches * g.transpose();
                wk.grads[s] = (a * dw_raw.array() *
                               (st.theta.array().abs() <= 1.0f).cast<float>())
                                  .matrix();
                if (s > 0) buf.dinput.noalias() = weights[s].w_eff * g;
            }

            if (s > 0) {
                // route dinput back to the previous stage's activations, then
                // through its sign STE at the top of the next loop turn
                const CltStage& prev = stages_[s - 1];
                const int prev_h = prev.pooled ? prev.out_h / 2 : prev.out_h;
                const int prev_w = prev.pooled ? prev.out_w / 2 : prev.out_w;
                if (st.is_conv) {
                    Eigen::MatrixXf dmap;
                    col2im_chunk(buf.dinput, items, st.in_h, st.in_w, st.kernel, dmap, st.in_c);
                    dnext = std::move(dmap);
                } else {
                    // unflatten (fan_in x items) -> (c x items*hw)
                    const int hw = prev_h * prev_w;
                    dnext.resize(prev.fan_out, static_cast<Eigen::Index>(items) * hw);
                    for (int t = 0; t < items; ++t) {
                        for (int ch = 0; ch < prev.fan_out; ++ch) {
                            dnext.block(ch, static_cast<Eigen::Index>(t) * hw, 1, hw) =
                                buf.dinput.col(t)
                                    .segment(static_cast<Eigen::Index>(ch) * hw, hw)
                                    .transpose();
                        }
                    }
                }
            }
        }
    }

    grads.assign(stages_.size(), Eigen::MatrixXf());
    double total_loss = 0.0;
    for (int c = 0; c < n_chunks; ++c) {
        total_loss += work[c].loss;
        for (size_t s = 0; s < stages_.size(); ++s) {
            if (grads[s].size() == 0) {
                grads[s] = work[c].grads[s];
            } else {
                grads[s] += work[c].grads[s];
            }
        }
    }
    return total_loss / nb;
}

double CltNet::loss(const Eigen::MatrixXf& images, const std::vector<uint8_t>& labels,
                    uint64_t noise_seed) {
    std::vector<Eigen::MatrixXf> grads;
    return forward_backward(images, labels, noise_seed, grads);
}

void CltNet::adam_step(const std::vector<Eigen::MatrixXf>& grads, double lr, int step) {
    const float b1 = static_cast<float>(config_.adam_beta1);
    const float b2 = static_cast<float>(config_.adam_beta2);
    const float eps = static_cast<float>(config_.adam_eps);
    const float wd = static_cast<float>(config_.weight_decay);
    const float lrf = static_cast<float>(lr);
    const float bias1 = 1.0f - std::pow(b1, static_cast<float>(step));
    const float bias2 = 1.0f - std::pow(b2, static_cast<float>(step));
    const float clamp = mode_ == WeightMode::Stochastic
                            ? static_cast<float>(config_.theta_clip)
                            : 1.0f;
    for (size_t s = 0; s < stages_.size(); ++s) {
        auto& st = stages_[s];
        const auto& g = grads[s];
        st.adam_m = b1 * st.adam_m + (1.0f - b1) * g;
        st.adam_v = (b2 * st.adam_v.array() + (1.0f - b2) * g.array().square()).matrix();
        Eigen::ArrayXXf mhat = st.adam_m.array() / bias1;
        Eigen::ArrayXXf vhat = st.adam_v.array() / bias2;
        st.theta.array() -= lrf * (mhat / (vhat.sqrt() + eps) + wd * st.theta.array());
        st.theta = st.theta.cwiseMax(-clamp).cwiseMin(clamp);
    }
}

net::Architecture CltNet::export_probabilities() const {
    net::Architecture out = arch_;
    size_t s = 0;
    for (auto& l : out.layers) {
        if (!l.has_weights()) continue;
        const auto& st = stages_[s++];
        Eigen::MatrixXd p(st.fan_in, st.fan_out);
        for (int j = 0; j < st.fan_out; ++j) {
            for (int i = 0; i < st.fan_in; ++i) {
                if (mode_ == WeightMode::Stochastic) {
                    p(i, j) = 1.0 / (1.0 + std::exp(-static_cast<double>(st.theta(i, j))));
                } else {
                    p(i, j) = st.theta(i, j) > 0.0f ? 1.0 : 0.0;
                }
            }
        }
        l.p = prob::ProbWeightMatrix(std::move(p));
    }
    return out;
}

double evaluate_accuracy(const net::Architecture& model, const data::Dataset& ds, int first,
                         int count) {
    const int n = count < 0 ? ds.count() - first : std::min(count, ds.count() - first);
    if (n <= 0) throw std::invalid_argument("evaluate_accuracy: empty range");
    const int n_chunks = std::min(64, n);
    std::vector<int> correct(n_chunks, 0);
#pragma omp parallel for schedule(dynamic)
    for (int c = 0; c < n_chunks; ++c) {
        const int lo = first + c * n / n_chunks;
        const int hi = first + (c + 1) * n / n_chunks;
        int ok = 0;
        for (int i = lo; i < hi; ++i) {
            const auto res = net::forward_expectation(model, ds.image_as_double(i));
            ok += res.predicted == ds.labels[i] ? 1 : 0;
        }
        correct[c] = ok;
    }
    return std::accumulate(correct.begin(), correct.end(), 0) / static_cast<double>(n);
}

namespace {

TrainResult train_common(const TrainConfig& config, const data::MnistData& data,
                         WeightMode mode) {
    config.validate();
    net::Architecture arch = net::Architecture::canonical();
    CltNet net(arch, mode, config);

    const int n_train = data.train.count();
    const int nb = config.batch_size;
    const int batches = n_train / nb;

    TrainResult result;
    auto record = [&](int epoch, double loss) {
        const net::Architecture model = net.export_probabilities();
        EpochStats st;
        st.epoch = epoch;
        st.loss = loss;
        st.test_acc = evaluate_accuracy(model, data.test);
        st.train_acc = evaluate_accuracy(model, data.train, 0,
                                         std::min(config.eval_train_subset, n_train));
        result.trace.push_back(st);
    };

    {
        const int probe = std::min(1000, n_train);
        const double loss0 = net.loss(data.train.images.leftCols(probe),
                                      {data.train.labels.begin(), data.train.labels.begin() + probe},
                                      derive_seed(config.seed, 0x70726f62));
        record(0, loss0);
    }

    Eigen::MatrixXf batch_images(data.train.images.rows(), nb);
    std::vector<uint8_t> batch_labels(nb);
    std::vector<int> order(n_train);
    std::iota(order.begin(), order.end(), 0);
    std::vector<Eigen::MatrixXf> grads;
    int step = 0;

    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        Rng shuffle_rng(derive_seed(config.seed, 0x73687566, epoch));
        for (int i = n_train - 1; i > 0; --i) {
            const int j = static_cast<int>(shuffle_rng.below(static_cast<uint64_t>(i) + 1));
            std::swap(order[i], order[j]);
        }
        const double lr = config.learning_rate *
                          (epoch >= config.lr_decay_epoch ? config.lr_decay : 1.0);
        const double ramp = config.sigma_warmup_epochs > 0
                                ? std::min(1.0, (epoch - 1.0) / config.sigma_warmup_epochs)
                                : 1.0;
        net.set_noise_scale(config.sigma_scale * ramp);
        double epoch_loss = 0.0;
        for (int b = 0; b < batches; ++b) {
            for (int t = 0; t < nb; ++t) {
                const int idx = order[b * nb + t];
                batch_images.col(t) = data.train.images.col(idx);
                batch_labels[t] = data.train.labels[idx];
            }
            const double loss = net.forward_backward(
                batch_images, batch_labels, derive_seed(config.seed, epoch, b), grads);
            if (!std::isfinite(loss)) {
                throw TrainingError("loss diverged at epoch " + std::to_string(epoch) +
                                    ", batch " + std::to_string(b));
            }
            net.adam_step(grads, lr, ++step);
            epoch_loss += loss;
        }
        record(epoch, epoch_loss / std::max(batches, 1));
    }

    result.model = net.export_probabilities();
    return result;
}

}  // namespace

TrainResult train_pbnn(const TrainConfig& config, const data::MnistData& data) {
    return train_common(config, data, WeightMode::Stochastic);
}

TrainResult train_bnn_baseline(const TrainConfig& config, const data::MnistData& data) {
    return train_common(config, data, WeightMode::DeterministicSign);
}

double bnn_flip_rate(double sigma_w) {
    if (sigma_w <= 0.0) return 0.0;
    return normal_cdf(-1.0 / (2.0 * sigma_w));
}

VariationResult evaluate_under_variation(const net::Architecture& model,
                                         bool deterministic_weights,
                                         const VariationSpec& spec, int trials,
                                         uint64_t seed, const data::Dataset& ds,
                                         int subset) {
    if (trials < 1) throw std::invalid_argument("evaluate_under_variation: trials must be >= 1");
    if (spec.sigma_w < 0.0) throw std::invalid_argument("sigma_w must be non-negative");
    const int count = subset < 0 ? ds.count() : std::min(subset, ds.count());
    VariationResult res;
    res.per_trial.reserve(trials);
    const double flip = bnn_flip_rate(spec.sigma_w);
    for (int t = 1; t <= trials; ++t) {
        net::Architecture perturbed = model;
        if (spec.sigma_w > 0.0) {
            Rng rng(derive_seed(seed, 0x766172, static_cast<uint64_t>(t)));
            for (auto& l : perturbed.layers) {
                if (!l.has_weights()) continue;
                for (Eigen::Index j = 0; j < l.p.cols(); ++j) {
                    for (Eigen::Index i = 0; i < l.p.rows(); ++i) {
                        double& p = l.p.p(i, j);
                        if (deterministic_weights) {
                            if (rng.uniform01() < flip) p = 1.0 - p;
                        } else {
                            p = std::clamp(p + spec.sigma_w * rng.normal(), 0.0, 1.0);
                        }
                    }
                }
                l.p.quantization.reset();
            }
        }
        res.per_trial.push_back(evaluate_accuracy(perturbed, ds, 0, count));
    }
    double mean = std::accumulate(res.per_trial.begin(), res.per_trial.end(), 0.0) / trials;
    double var = 0.0;
    for (double a : res.per_trial) var += (a - mean) * (a - mean);
    res.mean_acc = mean;
    res.std_acc = trials > 1 ? std::sqrt(var / (trials - 1)) : 0.0;
    return res;
}

}  // namespace pbnn::train
