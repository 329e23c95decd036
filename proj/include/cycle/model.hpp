#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "cycle/rng.hpp"

namespace cycle {

struct ModelConfig {
    int layers = 4;
    int heads = 4;
    int dim = 128;
    int context_len = 512;
    int vocab_size = 0;
    std::string precision = "double";  // "double" | "single"

    void validate() const {
        if (layers < 1 || heads < 1 || dim < 1 || context_len < 1 || vocab_size < 2) {
            throw std::invalid_argument("model config fields must be positive");
        }
        if (dim % heads != 0) throw std::invalid_argument("dim must be divisible by heads");
        if (precision != "double" && precision != "single") {
            throw std::invalid_argument("precision must be 'double' or 'single'");
        }
    }
};

class ContextOverflow : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class EmptyLossMask : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class NonFiniteLoss : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class InvalidSchedule : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Linear warmup to lr_max, then cosine decay to lr_min.
double lr_at(long long step, long long warmup_steps, long long total_steps, double lr_max,
             double lr_min);

// One training sequence, position-aligned with the token ids.
struct TrainItem {
    std::vector<int> ids;
    std::vector<char> loss_mask;   // true on target positions (the tokens to predict)
    std::vector<char> invisible;   // attention-key invisibility (may be empty = none)
};

using MatD = Eigen::MatrixXd;

// Mean NLL over mask-true positions; logits row t scores targets[t].
double loss_masked(const MatD& logits, const std::vector<int>& targets,
                   const std::vector<char>& loss_mask);
// d(loss)/d(logits); exactly zero on every mask-false row.
MatD loss_masked_grad(const MatD& logits, const std::vector<int>& targets,
                      const std::vector<char>& loss_mask);

// Incremental next-token scorer. Logits are always surfaced in double so the
// decoding loops are precision-agnostic.
class Decoder {
public:
    virtual ~Decoder() = default;
    // Feed the whole prompt, return logits after its last token.
    virtual Eigen::VectorXd prime(const std::vector<int>& prompt) = 0;
    virtual Eigen::VectorXd append(int token) = 0;
    virtual std::unique_ptr<Decoder> clone() const = 0;
    // Positions still available before the context window is full.
    virtual int remaining_capacity() const = 0;
};

class LanguageModel {
public:
    virtual ~LanguageModel() = default;
    virtual const ModelConfig& config() const = 0;
    virtual long long step() const = 0;
    // One Adam update over the batch; returns the mean per-instance loss.
    virtual double train_batch(const std::vector<const TrainItem*>& batch, double lr) = 0;
    // Loss only, no update.
    virtual double batch_loss(const std::vector<const TrainItem*>& batch) const = 0;
    virtual std::unique_ptr<Decoder> make_decoder() const = 0;
    virtual void save(const std::string& path) const = 0;
};

std::unique_ptr<LanguageModel> create_model(const ModelConfig& config, std::uint64_t seed);
std::unique_ptr<LanguageModel> load_model(const std::string& path);

inline constexpr const char* kCheckpointSchema = "cycle-ckpt/1";

// ---------------------------------------------------------------------------
// From-scratch decoder-only transformer: pre-norm blocks, learned positional
// embeddings, GELU feed-forward x4, untied output head. Templated on scalar
// so gradient checks run in double while production training may use single.
// ---------------------------------------------------------------------------

template <class Scalar>
class Transformer {
public:
    using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

    struct Tensor {
        std::string name;
        Mat w, g, m, v;
        Tensor(std::string name, int rows, int cols) : name(std::move(name)) {
            w = Mat::Zero(rows, cols);
            g = Mat::Zero(rows, cols);
            m = Mat::Zero(rows, cols);
            v = Mat::Zero(rows, cols);
        }
    };

    Transformer(const ModelConfig& config, std::uint64_t seed) : cfg_(config), seed_(seed) {
        cfg_.validate();
        const int d = cfg_.dim;
        const int ff = 4 * d;
        add("tok_emb", cfg_.vocab_size, d);
        add("pos_emb", cfg_.context_len, d);
        for (int l = 0; l < cfg_.layers; ++l) {
            std::string p = "layer" + std::to_string(l) + ".";
            add(p + "ln1_g", 1, d);
            add(p + "ln1_b", 1, d);
            add(p + "wq", d, d);
            add(p + "bq", 1, d);
            add(p + "wk", d, d);
            add(p + "bk", 1, d);
            add(p + "wv", d, d);
            add(p + "bv", 1, d);
            add(p + "wo", d, d);
            add(p + "bo", 1, d);
            add(p + "ln2_g", 1, d);
            add(p + "ln2_b", 1, d);
            add(p + "w1", d, ff);
            add(p + "b1", 1, ff);
            add(p + "w2", ff, d);
            add(p + "b2", 1, d);
        }
        add("lnf_g", 1, d);
        add("lnf_b", 1, d);
        add("head_w", d, cfg_.vocab_size);
        add("head_b", 1, cfg_.vocab_size);
        init_weights(seed);
    }

    const ModelConfig& config() const { return cfg_; }
    long long step() const { return step_; }
    std::uint64_t seed() const { return seed_; }
    void set_step(long long step) { step_ = step; }

    std::vector<Tensor>& tensors() { return tensors_; }
    const std::vector<Tensor>& tensors() const { return tensors_; }

    Tensor& tensor(const std::string& name) {
        for (Tensor& t : tensors_) {
            if (t.name == name) return t;
        }
        throw std::out_of_range("no tensor named " + name);
    }

    // ---- forward ----------------------------------------------------------

    struct LayerCache {
        Mat a1;       // ln1 output
        Mat xhat1;    // ln1 normalized input
        Mat rstd1;    // per-row reciprocal stddev (T x 1)
        Mat q, k, vv;
        std::vector<Mat> probs;  // per-head softmax rows (T x T)
        Mat att;                 // concatenated head outputs
        Mat x_mid;               // after attention residual
        Mat a2, xhat2, rstd2;
        Mat h_pre, h;            // feed-forward pre-activation / GELU output
    };

    struct Cache {
        std::vector<int> ids;
        std::vector<char> key_visible;
        Mat x0;
        std::vector<LayerCache> layers;
        Mat xf_hat, xf_rstd, final_x;
        Mat f;  // final layernorm output
    };

    // Logits for every position; invisible positions are removed as attention
    // keys for all queries (including their own).
    Mat forward(const std::vector<int>& ids, const std::vector<char>* invisible = nullptr) const {
        Cache cache;
        return forward_cached(ids, invisible, cache);
    }

    Mat forward_cached(const std::vector<int>& ids, const std::vector<char>* invisible,
                       Cache& cache) const {
        const int T = static_cast<int>(ids.size());
        if (T == 0) throw std::invalid_argument("empty sequence");
        if (T > cfg_.context_len) {
            throw ContextOverflow("sequence length " + std::to_string(T) + " exceeds context " +
                                  std::to_string(cfg_.context_len));
        }
        for (int id : ids) {
            if (id < 0 || id >= cfg_.vocab_size) throw std::out_of_range("token id out of vocab");
        }
        const int d = cfg_.dim;
        cache.ids = ids;
        cache.key_visible.assign(static_cast<std::size_t>(T), 1);
        if (invisible) {
            for (int t = 0; t < T; ++t) {
                if (t < static_cast<int>(invisible->size()) && (*invisible)[static_cast<std::size_t>(t)]) {
                    cache.key_visible[static_cast<std::size_t>(t)] = 0;
                }
            }
        }

        const Mat& tok = tensors_[kTokEmb].w;
        const Mat& pos = tensors_[kPosEmb].w;
        Mat x(T, d);
        for (int t = 0; t < T; ++t) {
            x.row(t) = tok.row(ids[static_cast<std::size_t>(t)]) + pos.row(t);
        }
        cache.x0 = x;
        cache.layers.resize(static_cast<std::size_t>(cfg_.layers));
        for (int l = 0; l < cfg_.layers; ++l) {
            LayerCache& lc = cache.layers[static_cast<std::size_t>(l)];
            const int base = layer_base(l);
            layer_norm(x, tensors_[base + kLn1G].w, tensors_[base + kLn1B].w, lc.a1, lc.xhat1,
                       lc.rstd1);
            lc.q = (lc.a1 * tensors_[base + kWq].w).rowwise() + row(tensors_[base + kBq].w);
            lc.k = (lc.a1 * tensors_[base + kWk].w).rowwise() + row(tensors_[base + kBk].w);
            lc.vv = (lc.a1 * tensors_[base + kWv].w).rowwise() + row(tensors_[base + kBv].w);
            attention_forward(lc, cache.key_visible);
            Mat proj = (lc.att * tensors_[base + kWo].w).rowwise() + row(tensors_[base + kBo].w);
            lc.x_mid = x + proj;
            layer_norm(lc.x_mid, tensors_[base + kLn2G].w, tensors_[base + kLn2B].w, lc.a2,
                       lc.xhat2, lc.rstd2);
            lc.h_pre = (lc.a2 * tensors_[base + kW1].w).rowwise() + row(tensors_[base + kB1].w);
            lc.h = gelu(lc.h_pre);
            Mat mlp = (lc.h * tensors_[base + kW2].w).rowwise() + row(tensors_[base + kB2].w);
            x = lc.x_mid + mlp;
        }
        cache.final_x = x;
        layer_norm(x, tensors_[kLnfG].w, tensors_[kLnfB].w, cache.f, cache.xf_hat, cache.xf_rstd);
        return (cache.f * tensors_[kHeadW].w).rowwise() + row(tensors_[kHeadB].w);
    }

    // ---- backward ---------------------------------------------------------

    void backward(const Cache& cache, const Mat& dlogits) {
        const int T = static_cast<int>(cache.ids.size());
        const int d = cfg_.dim;
        tensors_[kHeadW].g += cache.f.transpose() * dlogits;
        tensors_[kHeadB].g += dlogits.colwise().sum();
        Mat dx = dlogits * tensors_[kHeadW].w.transpose();
        layer_norm_backward(dx, cache.xf_hat, cache.xf_rstd, tensors_[kLnfG].w, tensors_[kLnfG].g,
                            tensors_[kLnfB].g);
        for (int l = cfg_.layers - 1; l >= 0; --l) {
            const LayerCache& lc = cache.layers[static_cast<std::size_t>(l)];
            const int base = layer_base(l);
            // feed-forward
            Mat dh = dx * tensors_[base + kW2].w.transpose();
            tensors_[base + kW2].g += lc.h.transpose() * dx;
            tensors_[base + kB2].g += dx.colwise().sum();
            Mat dh_pre = dh.cwiseProduct(gelu_grad(lc.h_pre));
            Mat da2 = dh_pre * tensors_[base + kW1].w.transpose();
            tensors_[base + kW1].g += lc.a2.transpose() * dh_pre;
            tensors_[base + kB1].g += dh_pre.colwise().sum();
            layer_norm_backward(da2, lc.xhat2, lc.rstd2, tensors_[base + kLn2G].w,
                                tensors_[base + kLn2G].g, tensors_[base + kLn2B].g);
            Mat dx_mid = dx + da2;
            // attention
            Mat datt = dx_mid * tensors_[base + kWo].w.transpose();
            tensors_[base + kWo].g += lc.att.transpose() * dx_mid;
            tensors_[base + kBo].g += dx_mid.colwise().sum();
            Mat dq = Mat::Zero(T, d), dk = Mat::Zero(T, d), dv = Mat::Zero(T, d);
            attention_backward(lc, datt, dq, dk, dv);
            Mat da1 = dq * tensors_[base + kWq].w.transpose() +
                      dk * tensors_[base + kWk].w.transpose() +
                      dv * tensors_[base + kWv].w.transpose();
            tensors_[base + kWq].g += lc.a1.transpose() * dq;
            tensors_[base + kBq].g += dq.colwise().sum();
            tensors_[base + kWk].g += lc.a1.transpose() * dk;
            tensors_[base + kBk].g += dk.colwise().sum();
            tensors_[base + kWv].g += lc.a1.transpose() * dv;
            tensors_[base + kBv].g += dv.colwise().sum();
            layer_norm_backward(da1, lc.xhat1, lc.rstd1, tensors_[base + kLn1G].w,
                                tensors_[base + kLn1G].g, tensors_[base + kLn1B].g);
            dx = dx_mid + da1;
        }
        for (int t = 0; t < T; ++t) {
            tensors_[kTokEmb].g.row(cache.ids[static_cast<std::size_t>(t)]) += dx.row(t);
            tensors_[kPosEmb].g.row(t) += dx.row(t);
        }
    }

    // ---- training ---------------------------------------------------------

    void zero_grads() {
        for (Tensor& t : tensors_) t.g.setZero();
    }

    // Accumulates grads; returns mean per-instance loss.
    double accumulate_batch(const std::vector<const TrainItem*>& batch) {
        if (batch.empty()) throw std::invalid_argument("empty batch");
        double total = 0.0;
        const double scale = 1.0 / static_cast<double>(batch.size());
        for (const TrainItem* item : batch) {
            Cache cache;
            Mat logits = forward_cached(item->ids, item->invisible.empty() ? nullptr : &item->invisible,
                                        cache);
            std::vector<int> targets;
            std::vector<char> mask;
            shift_targets(*item, targets, mask);
            MatD logits_d = logits.template cast<double>().topRows(logits.rows() - 1);
            double loss = loss_masked(logits_d, targets, mask);
            MatD dlogits_d = loss_masked_grad(logits_d, targets, mask) * scale;
            Mat dlogits = Mat::Zero(logits.rows(), logits.cols());
            dlogits.topRows(logits.rows() - 1) = dlogits_d.template cast<Scalar>();
            backward(cache, dlogits);
            total += loss;
        }
        double mean = total * scale;
        if (!std::isfinite(mean)) {
            throw NonFiniteLoss("non-finite loss at step " + std::to_string(step_));
        }
        return mean;
    }

    double batch_loss(const std::vector<const TrainItem*>& batch) const {
        if (batch.empty()) throw std::invalid_argument("empty batch");
        double total = 0.0;
        for (const TrainItem* item : batch) {
            Mat logits =
                forward(item->ids, item->invisible.empty() ? nullptr : &item->invisible);
            std::vector<int> targets;
            std::vector<char> mask;
            shift_targets(*item, targets, mask);
            MatD logits_d = logits.template cast<double>().topRows(logits.rows() - 1);
            total += loss_masked(logits_d, targets, mask);
        }
        return total / static_cast<double>(batch.size());
    }

    void adam_update(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8) {
        ++step_;
        const double t = static_cast<double>(step_);
        const double corr1 = 1.0 - std::pow(beta1, t);
        const double corr2 = 1.0 - std::pow(beta2, t);
        for (Tensor& p : tensors_) {
            p.m = Scalar(beta1) * p.m + Scalar(1.0 - beta1) * p.g;
            p.v = Scalar(beta2) * p.v + Scalar(1.0 - beta2) * p.g.cwiseProduct(p.g);
            Mat mhat = p.m / Scalar(corr1);
            Mat vhat = p.v / Scalar(corr2);
            p.w.array() -= Scalar(lr) * mhat.array() / (vhat.array().sqrt() + Scalar(eps));
        }
    }

    double train_batch(const std::vector<const TrainItem*>& batch, double lr) {
        zero_grads();
        double loss = accumulate_batch(batch);
        adam_update(lr);
        return loss;
    }

    static void shift_targets(const TrainItem& item, std::vector<int>& targets,
                              std::vector<char>& mask) {
        const std::size_t T = item.ids.size();
        if (T < 2) throw std::invalid_argument("training sequence too short");
        if (item.loss_mask.size() != T) throw std::invalid_argument("loss mask size mismatch");
        targets.resize(T - 1);
        mask.resize(T - 1);
        for (std::size_t t = 0; t + 1 < T; ++t) {
            targets[t] = item.ids[t + 1];
            mask[t] = item.loss_mask[t + 1];
        }
    }

private:
    // Fixed tensor offsets within a layer block.
    enum LayerOffset {
        kLn1G = 0, kLn1B, kWq, kBq, kWk, kBk, kWv, kBv, kWo, kBo,
        kLn2G, kLn2B, kW1, kB1, kW2, kB2, kLayerTensors
    };
    static constexpr int kTokEmb = 0;
    static constexpr int kPosEmb = 1;
    int layer_base(int l) const { return 2 + l * kLayerTensors; }

    // Named trailing tensors resolved once in the constructor.
    int kLnfG = 0, kLnfB = 0, kHeadW = 0, kHeadB = 0;

    void add(const std::string& name, int rows, int cols) {
        tensors_.emplace_back(name, rows, cols);
        if (name == "lnf_g") kLnfG = static_cast<int>(tensors_.size()) - 1;
        if (name == "lnf_b") kLnfB = static_cast<int>(tensors_.size()) - 1;
        if (name == "head_w") kHeadW = static_cast<int>(tensors_.size()) - 1;
        if (name == "head_b") kHeadB = static_cast<int>(tensors_.size()) - 1;
    }

    void init_weights(std::uint64_t seed) {
        std::mt19937_64 g(derive_seed(seed, "init"));
        auto fill_normal = [&g](Mat& w, double stddev) {
            for (int i = 0; i < w.rows(); ++i) {
                for (int j = 0; j < w.cols(); ++j) {
                    // Box-Muller on portable uniforms.
                    double u1 = rand_real(g);
                    double u2 = rand_real(g);
                    while (u1 <= 0.0) u1 = rand_real(g);
                    double n = std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
                    w(i, j) = Scalar(n * stddev);
                }
            }
        };
        const double base_std = 0.02;
        const double resid_std = base_std / std::sqrt(2.0 * cfg_.layers);
        for (Tensor& t : tensors_) {
            std::size_t dot = t.name.rfind('.');
            std::string base = dot == std::string::npos ? t.name : t.name.substr(dot + 1);
            if (base.rfind("ln", 0) == 0) {
                // layer-norm gain -> 1, bias -> 0
                if (base.back() == 'g') {
                    t.w.setOnes();
                } else {
                    t.w.setZero();
                }
            } else if (base[0] == 'b') {
                t.w.setZero();
            } else if (base == "wo" || base == "w2") {
                // residual-branch projections get the depth-scaled init
                fill_normal(t.w, resid_std);
            } else {
                fill_normal(t.w, base_std);
            }
        }
    }

    static Eigen::Matrix<Scalar, 1, Eigen::Dynamic> row(const Mat& m) { return m.row(0); }

    static void layer_norm(const Mat& x, const Mat& gain, const Mat& bias, Mat& out, Mat& xhat,
                           Mat& rstd) {
        const Scalar eps = Scalar(1e-5);
        const int T = static_cast<int>(x.rows());
        const int d = static_cast<int>(x.cols());
        out.resize(T, d);
        xhat.resize(T, d);
        rstd.resize(T, 1);
        for (int t = 0; t < T; ++t) {
            Scalar mean = x.row(t).mean();
            auto centered = (x.row(t).array() - mean).matrix();
            Scalar var = centered.squaredNorm() / Scalar(d);
            Scalar r = Scalar(1) / std::sqrt(var + eps);
            rstd(t, 0) = r;
            xhat.row(t) = centered * r;
            out.row(t) = xhat.row(t).cwiseProduct(gain.row(0)) + bias.row(0);
        }
    }

    // dx computed in place from dy; gain/bias grads accumulated.
    static void layer_norm_backward(Mat& dy, const Mat& xhat, const Mat& rstd, const Mat& gain,
                                    Mat& dgain, Mat& dbias) {
        const int T = static_cast<int>(dy.rows());
        const int d = static_cast<int>(dy.cols());
        for (int t = 0; t < T; ++t) {
            dgain.row(0) += dy.row(t).cwiseProduct(xhat.row(t));
            dbias.row(0) += dy.row(t);
            Eigen::Matrix<Scalar, 1, Eigen::Dynamic> dxhat = dy.row(t).cwiseProduct(gain.row(0));
            Scalar mean_dxhat = dxhat.mean();
            Scalar mean_dxhat_xhat = dxhat.cwiseProduct(xhat.row(t)).mean();
            dy.row(t) = (rstd(t, 0) *
                         (dxhat.array() - mean_dxhat - xhat.row(t).array() * mean_dxhat_xhat))
                            .matrix();
        }
        (void)d;
    }

    static Mat gelu(const Mat& u) {
        const Scalar k = Scalar(0.7978845608028654);  // sqrt(2/pi)
        const Scalar a = Scalar(0.044715);
        return (Scalar(0.5) * u.array() *
                (Scalar(1) + ((k * (u.array() + a * u.array().cube())).tanh())))
            .matrix();
    }

    static Mat gelu_grad(const Mat& u) {
        const Scalar k = Scalar(0.7978845608028654);
        const Scalar a = Scalar(0.044715);
        auto inner = k * (u.array() + a * u.array().cube());
        auto t = inner.tanh();
        auto sech2 = Scalar(1) - t * t;
        return (Scalar(0.5) * (Scalar(1) + t) +
                Scalar(0.5) * u.array() * sech2 * k * (Scalar(1) + Scalar(3) * a * u.array().square()))
            .matrix();
    }

    void attention_forward(LayerCache& lc, const std::vector<char>& key_visible) const {
        const int T = static_cast<int>(lc.q.rows());
        const int hd = cfg_.dim / cfg_.heads;
        const Scalar scale = Scalar(1.0 / std::sqrt(static_cast<double>(hd)));
        lc.att.resize(T, cfg_.dim);
        lc.probs.assign(static_cast<std::size_t>(cfg_.heads), Mat());
        for (int h = 0; h < cfg_.heads; ++h) {
            auto qh = lc.q.middleCols(h * hd, hd);
            auto kh = lc.k.middleCols(h * hd, hd);
            auto vh = lc.vv.middleCols(h * hd, hd);
            Mat scores = qh * kh.transpose() * scale;
            Mat& probs = lc.probs[static_cast<std::size_t>(h)];
            probs = Mat::Zero(T, T);
            for (int t = 0; t < T; ++t) {
                Scalar best = std::numeric_limits<Scalar>::lowest();
                bool any = false;
                for (int s = 0; s <= t; ++s) {
                    if (!key_visible[static_cast<std::size_t>(s)]) continue;
                    any = true;
                    best = std::max(best, scores(t, s));
                }
                if (!any) continue;  // fully masked row attends to nothing
                Scalar denom = Scalar(0);
                for (int s = 0; s <= t; ++s) {
                    if (!key_visible[static_cast<std::size_t>(s)]) continue;
                    Scalar e = std::exp(scores(t, s) - best);
                    probs(t, s) = e;
                    denom += e;
                }
                probs.row(t) /= denom;
            }
            lc.att.middleCols(h * hd, hd) = probs * vh;
        }
    }

    void attention_backward(const LayerCache& lc, const Mat& datt, Mat& dq, Mat& dk, Mat& dv) const {
        const int hd = cfg_.dim / cfg_.heads;
        const Scalar scale = Scalar(1.0 / std::sqrt(static_cast<double>(hd)));
        for (int h = 0; h < cfg_.heads; ++h) {
            auto qh = lc.q.middleCols(h * hd, hd);
            auto kh = lc.k.middleCols(h * hd, hd);
            auto vh = lc.vv.middleCols(h * hd, hd);
            const Mat& probs = lc.probs[static_cast<std::size_t>(h)];
            auto doh = datt.middleCols(h * hd, hd);
            Mat dprobs = doh * vh.transpose();
            dv.middleCols(h * hd, hd) += probs.transpose() * doh;
            Mat rowsum = probs.cwiseProduct(dprobs).rowwise().sum();
            Mat centered = dprobs;
            centered.colwise() -= rowsum.col(0);
            Mat dscores = probs.cwiseProduct(centered);
            dq.middleCols(h * hd, hd) += dscores * kh * scale;
            dk.middleCols(h * hd, hd) += dscores.transpose() * qh * scale;
        }
    }

    ModelConfig cfg_;
    std::uint64_t seed_ = 0;
    long long step_ = 0;
    std::vector<Tensor> tensors_;
};

using TransformerD = Transformer<double>;
using TransformerF = Transformer<float>;

}  // namespace cycle
