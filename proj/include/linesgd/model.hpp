#pragma once
#include <Eigen/Dense>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "linesgd/errors.hpp"

namespace linesgd {

// Flat coordinate vector holding all parameters of a model. Also used for
// gradients, momentum buffers and scan directions.
using ParamVector = Eigen::VectorXd;

enum class Activation { Relu, Tanh };
enum class ModelKind { Mlp, QuadraticHead };

Activation activation_from_string(const std::string& s);
std::string to_string(Activation a);
ModelKind model_kind_from_string(const std::string& s);
std::string to_string(ModelKind k);

struct ModelSpec {
    ModelKind kind{ModelKind::Mlp};
    // Mlp: layer sizes from input dimension to class count.
    // QuadraticHead: a single entry, the parameter count.
    std::vector<int> layers;
    Activation activation{Activation::Relu};
    std::uint64_t init_seed{0};

    void validate() const;
    int param_count() const;
    int feature_dim() const;
    int class_count() const;
};

struct SampleBatch {
    std::vector<std::int64_t> indices; // unique, ascending
    Eigen::MatrixXd features;          // batch x feature dim
    std::vector<int> labels;
};

class Model {
public:
    virtual ~Model() = default;

    const ModelSpec& spec() const { return spec_; }
    int param_count() const { return spec_.param_count(); }

    ParamVector init() const;

    // One nonnegative loss per row of `features`, in row order.
    virtual void per_sample_losses(const ParamVector& params, const Eigen::MatrixXd& features,
                                   const std::vector<int>& labels, std::span<double> out) const = 0;

    // Mean sample loss over the batch (ascending fixed-order reduction) and its
    // gradient. Throws NumericError naming the layer on non-finite intermediates.
    virtual double loss_and_grad(const ParamVector& params, const Eigen::MatrixXd& features,
                                 const std::vector<int>& labels, ParamVector& grad) const = 0;

    virtual double accuracy(const ParamVector& params, const Eigen::MatrixXd& features,
                            const std::vector<int>& labels) const = 0;

    double batch_loss(const ParamVector& params, const Eigen::MatrixXd& features,
                      const std::vector<int>& labels) const;

protected:
    explicit Model(ModelSpec spec) : spec_(std::move(spec)) {}
    void check_params(const ParamVector& params) const;

    ModelSpec spec_;
};

std::unique_ptr<Model> make_model(const ModelSpec& spec);

// Deterministic seeded initialization; identical spec and seed give a
// bit-identical vector.
ParamVector init_model(const ModelSpec& spec);

std::vector<double> per_sample_losses(const Model& model, const ParamVector& params, const SampleBatch& batch);

struct LossGrad {
    double loss;
    ParamVector grad;
};
LossGrad batch_loss_and_grad(const Model& model, const ParamVector& params, const SampleBatch& batch);

// origin + s * direction, elementwise.
ParamVector axpy_point(const ParamVector& origin, double s, const ParamVector& direction);

// grad(batch) . direction for a unit direction (norm within 1e-9 of 1).
double directional_derivative(const Model& model, const ParamVector& params, const ParamVector& direction,
                              const SampleBatch& batch);

// Ascending fixed-order mean, the reduction used everywhere a set of sample
// values is aggregated.
double ordered_mean(std::span<const double> values);

} // namespace linesgd
