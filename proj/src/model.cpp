#include "cycle/model.hpp"

#include <fstream>

#include <json.hpp>

namespace cycle {

double lr_at(long long step, long long warmup_steps, long long total_steps, double lr_max,
             double lr_min) {
    if (total_steps < 1 || warmup_steps < 0 || warmup_steps >= total_steps) {
        throw InvalidSchedule("require 0 <= warmup_steps < total_steps");
    }
    if (step < 0 || step > total_steps) {
        throw InvalidSchedule("step outside [0, total_steps]");
    }
    if (lr_max < lr_min || lr_min < 0.0) {
        throw InvalidSchedule("require 0 <= lr_min <= lr_max");
    }
    if (step < warmup_steps) {
        return lr_max * static_cast<double>(step) / static_cast<double>(warmup_steps);
    }
    double tau = static_cast<double>(step - warmup_steps) /
                 static_cast<double>(total_steps - warmup_steps);
    return lr_min + (lr_max - lr_min) * (1.0 + std::cos(M_PI * tau)) / 2.0;
}

namespace {

// Row-wise log-softmax value for one target column, numerically stable.
double row_nll(const MatD& logits, int t, int target) {
    double mx = logits.row(t).maxCoeff();
    double denom = (logits.row(t).array() - mx).exp().sum();
    return -(logits(t, target) - mx - std::log(denom));
}

void check_loss_args(const MatD& logits, const std::vector<int>& targets,
                     const std::vector<char>& loss_mask) {
    if (static_cast<std::size_t>(logits.rows()) != targets.size() ||
        targets.size() != loss_mask.size()) {
        throw std::invalid_argument("loss shapes disagree");
    }
    bool any = false;
    for (char m : loss_mask) any = any || m;
    if (!any) throw EmptyLossMask("loss mask has no true positions");
}

}  // namespace

double loss_masked(const MatD& logits, const std::vector<int>& targets,
                   const std::vector<char>& loss_mask) {
    check_loss_args(logits, targets, loss_mask);
    double total = 0.0;
    int count = 0;
    for (int t = 0; t < logits.rows(); ++t) {
        if (!loss_mask[static_cast<std::size_t>(t)]) continue;
        int target = targets[static_cast<std::size_t>(t)];
        if (target < 0 || target >= logits.cols()) throw std::out_of_range("target out of vocab");
        total += row_nll(logits, t, target);
        ++count;
    }
    return total / count;
}

MatD loss_masked_grad(const MatD& logits, const std::vector<int>& targets,
                      const std::vector<char>& loss_mask) {
    check_loss_args(logits, targets, loss_mask);
    MatD grad = MatD::Zero(logits.rows(), logits.cols());
    int count = 0;
    for (char m : loss_mask) count += m ? 1 : 0;
    for (int t = 0; t < logits.rows(); ++t) {
        if (!loss_mask[static_cast<std::size_t>(t)]) continue;
        double mx = logits.row(t).maxCoeff();
        Eigen::RowVectorXd e = (logits.row(t).array() - mx).exp();
        grad.row(t) = e / e.sum();
        grad(t, targets[static_cast<std::size_t>(t)]) -= 1.0;
        grad.row(t) /= count;
    }
    return grad;
}

namespace {

// Incremental decoding with per-layer key/value caches. Produces the same
// last-row logits as a full forward over the prefix.
template <class Scalar>
class TransformerDecoder final : public Decoder {
public:
    using Mat = typename Transformer<Scalar>::Mat;
    using RowVec = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

    explicit TransformerDecoder(const Transformer<Scalar>* model) : model_(model) {
        caches_.resize(static_cast<std::size_t>(model->config().layers));
    }

    Eigen::VectorXd prime(const std::vector<int>& prompt) override {
        if (prompt.empty()) throw std::invalid_argument("empty prompt");
        if (static_cast<int>(prompt.size()) > model_->config().context_len) {
            throw ContextOverflow("prompt does not fit the context window");
        }
        pos_ = 0;
        for (auto& c : caches_) {
            c.k.resize(0, model_->config().dim);
            c.v.resize(0, model_->config().dim);
        }
        Eigen::VectorXd logits;
        for (int id : prompt) logits = feed(id);
        return logits;
    }

    Eigen::VectorXd append(int token) override {
        if (remaining_capacity() <= 0) throw ContextOverflow("context window exhausted");
        return feed(token);
    }

    std::unique_ptr<Decoder> clone() const override {
        return std::make_unique<TransformerDecoder<Scalar>>(*this);
    }

    int remaining_capacity() const override { return model_->config().context_len - pos_; }

private:
    struct LayerKV {
        Mat k, v;
    };

    Eigen::VectorXd feed(int id) {
        const ModelConfig& cfg = model_->config();
        if (id < 0 || id >= cfg.vocab_size) throw std::out_of_range("token id out of vocab");
        if (pos_ >= cfg.context_len) throw ContextOverflow("context window exhausted");
        const auto& tensors = model_->tensors();
        const int d = cfg.dim;
        const int hd = d / cfg.heads;
        const Scalar scale = Scalar(1.0 / std::sqrt(static_cast<double>(hd)));

        RowVec x = tensors[0].w.row(id) + tensors[1].w.row(pos_);
        for (int l = 0; l < cfg.layers; ++l) {
            const int base = 2 + l * 16;
            RowVec a1 = layer_norm_row(x, tensors[static_cast<std::size_t>(base)].w,
                                       tensors[static_cast<std::size_t>(base + 1)].w);
            RowVec q = a1 * tensors[static_cast<std::size_t>(base + 2)].w +
                       tensors[static_cast<std::size_t>(base + 3)].w.row(0);
            RowVec k = a1 * tensors[static_cast<std::size_t>(base + 4)].w +
                       tensors[static_cast<std::size_t>(base + 5)].w.row(0);
            RowVec v = a1 * tensors[static_cast<std::size_t>(base + 6)].w +
                       tensors[static_cast<std::size_t>(base + 7)].w.row(0);
            LayerKV& kv = caches_[static_cast<std::size_t>(l)];
            kv.k.conservativeResize(pos_ + 1, d);
            kv.v.conservativeResize(pos_ + 1, d);
            kv.k.row(pos_) = k;
            kv.v.row(pos_) = v;
            RowVec att(d);
            for (int h = 0; h < cfg.heads; ++h) {
                auto qh = q.middleCols(h * hd, hd);
                auto kh = kv.k.middleCols(h * hd, hd);
                auto vh = kv.v.middleCols(h * hd, hd);
                Eigen::Matrix<Scalar, Eigen::Dynamic, 1> scores = kh * qh.transpose() * scale;
                Scalar best = scores.maxCoeff();
                Eigen::Matrix<Scalar, Eigen::Dynamic, 1> probs =
                    (scores.array() - best).exp().matrix();
                probs /= probs.sum();
                att.middleCols(h * hd, hd) = probs.transpose() * vh;
            }
            x += att * tensors[static_cast<std::size_t>(base + 8)].w +
                 tensors[static_cast<std::size_t>(base + 9)].w.row(0);
            RowVec a2 = layer_norm_row(x, tensors[static_cast<std::size_t>(base + 10)].w,
                                       tensors[static_cast<std::size_t>(base + 11)].w);
            RowVec h_pre = a2 * tensors[static_cast<std::size_t>(base + 12)].w +
                           tensors[static_cast<std::size_t>(base + 13)].w.row(0);
            RowVec h_act = gelu_row(h_pre);
            x += h_act * tensors[static_cast<std::size_t>(base + 14)].w +
                 tensors[static_cast<std::size_t>(base + 15)].w.row(0);
        }
        const std::size_t n = tensors.size();
        RowVec f = layer_norm_row(x, tensors[n - 4].w, tensors[n - 3].w);
        RowVec logits = f * tensors[n - 2].w + tensors[n - 1].w.row(0);
        ++pos_;
        return logits.transpose().template cast<double>();
    }

    static RowVec layer_norm_row(const RowVec& x, const Mat& gain, const Mat& bias) {
        const Scalar eps = Scalar(1e-5);
        Scalar mean = x.mean();
        RowVec centered = (x.array() - mean).matrix();
        Scalar var = centered.squaredNorm() / Scalar(x.cols());
        Scalar r = Scalar(1) / std::sqrt(var + eps);
        return ((centered * r).cwiseProduct(gain.row(0)) + bias.row(0)).eval();
    }

    static RowVec gelu_row(const RowVec& u) {
        const Scalar k = Scalar(0.7978845608028654);
        const Scalar a = Scalar(0.044715);
        return (Scalar(0.5) * u.array() *
                (Scalar(1) + ((k * (u.array() + a * u.array().cube())).tanh())))
            .matrix();
    }

    const Transformer<Scalar>* model_;
    std::vector<LayerKV> caches_;
    int pos_ = 0;
};

template <class Scalar>
class LanguageModelImpl final : public LanguageModel {
public:
    LanguageModelImpl(const ModelConfig& config, std::uint64_t seed) : model_(config, seed) {}

    const ModelConfig& config() const override { return model_.config(); }
    long long step() const override { return model_.step(); }

    double train_batch(const std::vector<const TrainItem*>& batch, double lr) override {
        return model_.train_batch(batch, lr);
    }

    double batch_loss(const std::vector<const TrainItem*>& batch) const override {
        return model_.batch_loss(batch);
    }

    std::unique_ptr<Decoder> make_decoder() const override {
        return std::make_unique<TransformerDecoder<Scalar>>(&model_);
    }

    void save(const std::string& path) const override {
        std::ofstream out(path, std::ios::binary);
        if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
        const ModelConfig& cfg = model_.config();
        nlohmann::json header = {
            {"schema", kCheckpointSchema},
            {"config",
             {{"layers", cfg.layers},
              {"heads", cfg.heads},
              {"dim", cfg.dim},
              {"context_len", cfg.context_len},
              {"vocab_size", cfg.vocab_size},
              {"precision", cfg.precision}}},
            {"step", model_.step()},
            {"seed", model_.seed()},
        };
        out << header.dump() << '\n';
        // Row-major little-endian scalars in tensor declaration order.
        for (const auto& t : model_.tensors()) {
            for (int i = 0; i < t.w.rows(); ++i) {
                for (int j = 0; j < t.w.cols(); ++j) {
                    Scalar v = t.w(i, j);
                    out.write(reinterpret_cast<const char*>(&v), sizeof(Scalar));
                }
            }
        }
        if (!out) throw std::runtime_error("checkpoint write failed: " + path);
    }

    void load_weights(std::istream& in, long long step) {
        for (auto& t : model_.tensors()) {
            for (int i = 0; i < t.w.rows(); ++i) {
                for (int j = 0; j < t.w.cols(); ++j) {
                    Scalar v;
                    in.read(reinterpret_cast<char*>(&v), sizeof(Scalar));
                    t.w(i, j) = v;
                }
            }
        }
        if (!in) throw std::runtime_error("truncated checkpoint payload");
        model_.set_step(step);
    }

    Transformer<Scalar>& transformer() { return model_; }

private:
    Transformer<Scalar> model_;
};

}  // namespace

std::unique_ptr<LanguageModel> create_model(const ModelConfig& config, std::uint64_t seed) {
    config.validate();
    if (config.precision == "single") {
        return std::make_unique<LanguageModelImpl<float>>(config, seed);
    }
    return std::make_unique<LanguageModelImpl<double>>(config, seed);
}

std::unique_ptr<LanguageModel> load_model(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read checkpoint: " + path);
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("empty checkpoint: " + path);
    nlohmann::json header = nlohmann::json::parse(line);
    if (header.value("schema", "") != kCheckpointSchema) {
        throw std::runtime_error("unexpected checkpoint schema in " + path);
    }
    ModelConfig cfg;
    const auto& jc = header.at("config");
    cfg.layers = jc.at("layers").get<int>();
    cfg.heads = jc.at("heads").get<int>();
    cfg.dim = jc.at("dim").get<int>();
    cfg.context_len = jc.at("context_len").get<int>();
    cfg.vocab_size = jc.at("vocab_size").get<int>();
    cfg.precision = jc.value("precision", "double");
    std::uint64_t seed = header.value("seed", std::uint64_t{0});
    long long step = header.value("step", 0LL);
    if (cfg.precision == "single") {
        auto model = std::make_unique<LanguageModelImpl<float>>(cfg, seed);
        model->load_weights(in, step);
        return model;
    }
    auto model = std::make_unique<LanguageModelImpl<double>>(cfg, seed);
    model->load_weights(in, step);
    return model;
}

}  // namespace cycle
