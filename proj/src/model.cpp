#include "linesgd/model.hpp"
#include "linesgd/rng.hpp"

#include <cmath>

namespace linesgd {

Activation activation_from_string(const std::string& s) {
    if (s == "relu") return Activation::Relu;
    if (s == "tanh") return Activation::Tanh;
    throw SpecError("unknown activation: '" + s + "' (expected relu or tanh)");
}

std::string to_string(Activation a) { return a == Activation::Relu ? "relu" : "tanh"; }

ModelKind model_kind_from_string(const std::string& s) {
    if (s == "mlp") return ModelKind::Mlp;
    if (s == "quadratic") return ModelKind::QuadraticHead;
    throw SpecError("unknown model kind: '" + s + "' (expected mlp or quadratic)");
}

std::string to_string(ModelKind k) { return k == ModelKind::Mlp ? "mlp" : "quadratic"; }

void ModelSpec::validate() const {
    if (kind == ModelKind::QuadraticHead) {
        if (layers.size() != 1 || layers[0] < 1)
            throw SpecError("quadratic model needs a single positive layer entry (the parameter count)");
        return;
    }
    if (layers.size() < 2) throw SpecError("mlp needs at least an input and an output layer size");
    for (const int l : layers)
        if (l < 1) throw SpecError("layer sizes must be positive");
}

int ModelSpec::param_count() const {
    validate();
    if (kind == ModelKind::QuadraticHead) return layers[0];
    int n = 0;
    for (std::size_t l = 0; l + 1 < layers.size(); ++l) n += layers[l] * layers[l + 1] + layers[l + 1];
    return n;
}

int ModelSpec::feature_dim() const { return layers.front(); }
int ModelSpec::class_count() const { return layers.back(); }

ParamVector Model::init() const { return init_model(spec_); }

void Model::check_params(const ParamVector& params) const {
    if (params.size() != param_count())
        throw SpecError("parameter vector length " + std::to_string(params.size()) + " does not match model (" +
                        std::to_string(param_count()) + ")");
}

double Model::batch_loss(const ParamVector& params, const Eigen::MatrixXd& features,
                         const std::vector<int>& labels) const {
    std::vector<double> losses(static_cast<std::size_t>(features.rows()));
    per_sample_losses(params, features, labels, losses);
    return ordered_mean(losses);
}

double ordered_mean(std::span<const double> values) {
    double sum = 0.0;
    for (const double v : values) sum += v;
    return sum / static_cast<double>(values.size());
}

namespace {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

class MlpModel final : public Model {
public:
    explicit MlpModel(ModelSpec spec) : Model(std::move(spec)) {
        int off = 0;
        for (std::size_t l = 0; l + 1 < spec_.layers.size(); ++l) {
            w_off_.push_back(off);
            off += spec_.layers[l] * spec_.layers[l + 1];
            b_off_.push_back(off);
            off += spec_.layers[l + 1];
        }
    }

    void per_sample_losses(const ParamVector& params, const Eigen::MatrixXd& features,
                           const std::vector<int>& labels, std::span<double> out) const override {
        forward(params, features, labels, out, nullptr);
    }

    double loss_and_grad(const ParamVector& params, const Eigen::MatrixXd& features, const std::vector<int>& labels,
                         ParamVector& grad) const override {
        const auto n = features.rows();
        std::vector<Eigen::MatrixXd> acts; // activations entering each layer, plus logits
        std::vector<double> losses(static_cast<std::size_t>(n));
        forward(params, features, labels, losses, &acts);
        for (std::size_t l = 0; l < acts.size(); ++l)
            if (!acts[l].allFinite())
                throw NumericError("non-finite values at layer " + std::to_string(l));
        const double loss = ordered_mean(losses);

        grad.resize(params.size());
        const int layer_count = static_cast<int>(spec_.layers.size()) - 1;
        // Softmax probabilities from the logits, then the mean-loss gradient.
        Eigen::MatrixXd delta = acts.back();
        for (Eigen::Index i = 0; i < n; ++i) {
            const double m = delta.row(i).maxCoeff();
            delta.row(i) = (delta.row(i).array() - m).exp();
            delta.row(i) /= delta.row(i).sum();
            delta(i, labels[static_cast<std::size_t>(i)]) -= 1.0;
        }
        delta /= static_cast<double>(n);

        for (int l = layer_count - 1; l >= 0; --l) {
            const int in = spec_.layers[static_cast<std::size_t>(l)];
            const int outd = spec_.layers[static_cast<std::size_t>(l) + 1];
            Eigen::Map<const RowMajor> w(params.data() + w_off_[static_cast<std::size_t>(l)], in, outd);
            Eigen::Map<RowMajor> dw(grad.data() + w_off_[static_cast<std::size_t>(l)], in, outd);
            Eigen::Map<Eigen::VectorXd> db(grad.data() + b_off_[static_cast<std::size_t>(l)], outd);
            dw.noalias() = acts[static_cast<std::size_t>(l)].transpose() * delta;
            db = delta.colwise().sum();
            if (l > 0) {
                Eigen::MatrixXd da = delta * w.transpose();
                const Eigen::MatrixXd& a = acts[static_cast<std::size_t>(l)];
                if (spec_.activation == Activation::Relu)
                    delta = (a.array() > 0.0).select(da, 0.0);
                else
                    delta = da.array() * (1.0 - a.array().square());
            }
        }
        return loss;
    }

    double accuracy(const ParamVector& params, const Eigen::MatrixXd& features,
                    const std::vector<int>& labels) const override {
        std::vector<double> losses(static_cast<std::size_t>(features.rows()));
        std::vector<Eigen::MatrixXd> acts;
        forward(params, features, labels, losses, &acts);
        const Eigen::MatrixXd& logits = acts.back();
        long correct = 0;
        for (Eigen::Index i = 0; i < logits.rows(); ++i) {
            Eigen::Index best = 0;
            logits.row(i).maxCoeff(&best);
            if (static_cast<int>(best) == labels[static_cast<std::size_t>(i)]) ++correct;
        }
        return static_cast<double>(correct) / static_cast<double>(logits.rows());
    }

private:
    // Computes per-sample cross-entropy losses; when `acts` is given, retains
    // the input activation of every layer plus the final logits.
    void forward(const ParamVector& params, const Eigen::MatrixXd& features, const std::vector<int>& labels,
                 std::span<double> losses, std::vector<Eigen::MatrixXd>* acts) const {
        check_params(params);
        if (features.cols() != spec_.feature_dim())
            throw SpecError("feature dimension " + std::to_string(features.cols()) + " does not match model input " +
                            std::to_string(spec_.feature_dim()));
        if (static_cast<Eigen::Index>(labels.size()) != features.rows())
            throw SpecError("label count does not match batch size");
        const int classes = spec_.class_count();
        for (const int y : labels)
            if (y < 0 || y >= classes) throw SpecError("label out of range: " + std::to_string(y));

        Eigen::MatrixXd a = features;
        const int layer_count = static_cast<int>(spec_.layers.size()) - 1;
        for (int l = 0; l < layer_count; ++l) {
            if (acts) acts->push_back(a);
            const int in = spec_.layers[static_cast<std::size_t>(l)];
            const int outd = spec_.layers[static_cast<std::size_t>(l) + 1];
            Eigen::Map<const RowMajor> w(params.data() + w_off_[static_cast<std::size_t>(l)], in, outd);
            Eigen::Map<const Eigen::VectorXd> b(params.data() + b_off_[static_cast<std::size_t>(l)], outd);
            Eigen::MatrixXd z = a * w;
            z.rowwise() += b.transpose();
            if (l + 1 < layer_count) {
                if (spec_.activation == Activation::Relu)
                    a = z.array().max(0.0);
                else
                    a = z.array().tanh();
            } else {
                a = std::move(z);
            }
        }
        if (acts) acts->push_back(a);

        // Max-subtracted log-softmax; scans reach high-loss regions where the
        // naive form overflows.
        for (Eigen::Index i = 0; i < a.rows(); ++i) {
            const double m = a.row(i).maxCoeff();
            const double lse = m + std::log((a.row(i).array() - m).exp().sum());
            losses[static_cast<std::size_t>(i)] = lse - a(i, labels[static_cast<std::size_t>(i)]);
        }
    }

    std::vector<int> w_off_, b_off_;
};

// Loss = sum(theta^2) regardless of the input sample. Closed-form gradient for
// oracle tests and exactly parabolic scan lines.
class QuadraticHeadModel final : public Model {
public:
    explicit QuadraticHeadModel(ModelSpec spec) : Model(std::move(spec)) {}

    void per_sample_losses(const ParamVector& params, const Eigen::MatrixXd& features, const std::vector<int>&,
                           std::span<double> out) const override {
        check_params(params);
        const double v = params.squaredNorm();
        for (auto& o : out) o = v;
        (void)features;
    }

    double loss_and_grad(const ParamVector& params, const Eigen::MatrixXd& features, const std::vector<int>& labels,
                         ParamVector& grad) const override {
        check_params(params);
        if (!params.allFinite()) throw NumericError("non-finite values at layer 0");
        std::vector<double> losses(static_cast<std::size_t>(features.rows()));
        per_sample_losses(params, features, labels, losses);
        grad = 2.0 * params;
        return ordered_mean(losses);
    }

    double accuracy(const ParamVector&, const Eigen::MatrixXd&, const std::vector<int>&) const override {
        return 0.0;
    }
};

} // namespace

std::unique_ptr<Model> make_model(const ModelSpec& spec) {
    spec.validate();
    if (spec.kind == ModelKind::QuadraticHead) return std::make_unique<QuadraticHeadModel>(spec);
    return std::make_unique<MlpModel>(spec);
}

ParamVector init_model(const ModelSpec& spec) {
    spec.validate();
    ParamVector p(spec.param_count());
    Rng rng(spec.init_seed);
    if (spec.kind == ModelKind::QuadraticHead) {
        const double bound = std::sqrt(6.0 / (2.0 * spec.layers[0]));
        for (Eigen::Index i = 0; i < p.size(); ++i) p[i] = rng.uniform(-bound, bound);
        return p;
    }
    int off = 0;
    for (std::size_t l = 0; l + 1 < spec.layers.size(); ++l) {
        const int in = spec.layers[l];
        const int outd = spec.layers[l + 1];
        const double bound = std::sqrt(6.0 / static_cast<double>(in + outd));
        for (int i = 0; i < in * outd; ++i) p[off++] = rng.uniform(-bound, bound);
        for (int i = 0; i < outd; ++i) p[off++] = 0.0; // zero biases
    }
    return p;
}

std::vector<double> per_sample_losses(const Model& model, const ParamVector& params, const SampleBatch& batch) {
    std::vector<double> out(static_cast<std::size_t>(batch.features.rows()));
    model.per_sample_losses(params, batch.features, batch.labels, out);
    return out;
}

LossGrad batch_loss_and_grad(const Model& model, const ParamVector& params, const SampleBatch& batch) {
    LossGrad lg;
    lg.loss = model.loss_and_grad(params, batch.features, batch.labels, lg.grad);
    return lg;
}

ParamVector axpy_point(const ParamVector& origin, double s, const ParamVector& direction) {
    if (origin.size() != direction.size())
        throw SpecError("axpy_point: length mismatch (" + std::to_string(origin.size()) + " vs " +
                        std::to_string(direction.size()) + ")");
    return origin + s * direction;
}

double directional_derivative(const Model& model, const ParamVector& params, const ParamVector& direction,
                              const SampleBatch& batch) {
    if (std::abs(direction.norm() - 1.0) > 1e-9)
        throw SpecError("directional_derivative requires a unit direction");
    const LossGrad lg = batch_loss_and_grad(model, params, batch);
    return lg.grad.dot(direction);
}

} // namespace linesgd
