#include "gpenkf/gp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>

#include "gpenkf/errors.hpp"
#include "gpenkf/parallel.hpp"
#include "gpenkf/random.hpp"

namespace gpenkf::gp {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;
constexpr double kMaxJitter = 1e-2;

Eigen::LLT<Eigen::MatrixXd> factorize_or_throw(const Eigen::MatrixXd& K) {
    Eigen::LLT<Eigen::MatrixXd> llt(K);
    if (llt.info() != Eigen::Success) throw SingularKernel("kernel matrix is not positive definite");
    return llt;
}

// Squared distances between the rows of A and B along one dimension.
Eigen::MatrixXd squared_differences(const Eigen::Ref<const Eigen::MatrixXd>& A,
                                    const Eigen::Ref<const Eigen::MatrixXd>& B, Eigen::Index dim) {
    const Eigen::VectorXd a = A.col(dim);
    const Eigen::VectorXd b = B.col(dim);
    return (a.replicate(1, b.size()) - b.transpose().replicate(a.size(), 1)).array().square().matrix();
}

// Box for the optimizer in log-hyperparameter coordinates.
struct LogBox {
    Eigen::VectorXd lo;
    Eigen::VectorXd hi;
};

LogBox log_box(const HyperparameterBounds& b, Eigen::Index d) {
    LogBox box{Eigen::VectorXd(d + 2), Eigen::VectorXd(d + 2)};
    box.lo[0] = std::log(b.signal_lo);
    box.hi[0] = std::log(b.signal_hi);
    box.lo.segment(1, d).setConstant(std::log(b.lengthscale_lo));
    box.hi.segment(1, d).setConstant(std::log(b.lengthscale_hi));
    box.lo[d + 1] = std::log(b.noise_lo);
    box.hi[d + 1] = std::log(b.noise_hi);
    return box;
}

// Unconstrained coordinates z map into the box through a logistic function.
Eigen::VectorXd box_from_free(const LogBox& box, const Eigen::VectorXd& z, Eigen::VectorXd* jacobian) {
    const Eigen::ArrayXd s = 1.0 / (1.0 + (-z.array()).exp());
    const Eigen::ArrayXd width = box.hi.array() - box.lo.array();
    if (jacobian) *jacobian = (width * s * (1.0 - s)).matrix();
    return (box.lo.array() + width * s).matrix();
}

Eigen::VectorXd free_from_box(const LogBox& box, const Eigen::VectorXd& u) {
    const Eigen::ArrayXd width = box.hi.array() - box.lo.array();
    const Eigen::ArrayXd s = ((u.array() - box.lo.array()) / width).cwiseMax(1e-9).cwiseMin(1.0 - 1e-9);
    return (s / (1.0 - s)).log().matrix();
}

ProfiledLikelihood profiled_likelihood(const Eigen::Ref<const Eigen::MatrixXd>& X, const Eigen::Ref<const Eigen::VectorXd>& y,
                                       const Hyperparameters& hp, bool with_gradient) {
    const Eigen::Index m = X.rows();
    const Eigen::Index d = X.cols();
    if (m != y.size()) throw DimensionMismatch("X and y differ in length");
    const Eigen::MatrixXd Kf = rbf_kernel(X, X, hp);
    Eigen::MatrixXd K = Kf;
    K.diagonal().array() += hp.noise_variance;
    const auto llt = factorize_or_throw(K);

    const Eigen::MatrixXd F = linear_basis(X);
    const Eigen::MatrixXd KiF = llt.solve(F);
    Eigen::MatrixXd A = F.transpose() * KiF;
    A.diagonal().array() += 1e-12 * std::max(A.diagonal().maxCoeff(), 1.0);
    ProfiledLikelihood out;
    out.mean_coeffs = A.ldlt().solve(KiF.transpose() * y);

    const Eigen::VectorXd r = y - F * out.mean_coeffs;
    const Eigen::VectorXd alpha = llt.solve(r);
    const double logdet = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
    out.value = -0.5 * r.dot(alpha) - 0.5 * logdet - 0.5 * static_cast<double>(m) * kLog2Pi;
    if (!with_gradient) return out;

    // d/dp = 1/2 tr((alpha alpha^T - K^-1) dK/dp); beta is stationary.
    Eigen::MatrixXd Linv = Eigen::MatrixXd::Identity(m, m);
    llt.matrixL().solveInPlace(Linv);
    Eigen::MatrixXd W = alpha * alpha.transpose();
    W.noalias() -= Linv.transpose() * Linv;
    out.gradient.resize(d + 2);
    out.gradient[0] = 0.5 * (W.array() * Kf.array()).sum();
    for (Eigen::Index k = 0; k < d; ++k) {
        const double l2 = hp.lengthscales[k] * hp.lengthscales[k];
        out.gradient[1 + k] = 0.5 * (W.array() * Kf.array() * squared_differences(X, X, k).array()).sum() / l2;
    }
    out.gradient[d + 1] = 0.5 * hp.noise_variance * W.trace();
    return out;
}

struct Objective {
    const Eigen::MatrixXd& Z;
    const Eigen::VectorXd& y;
    const LogBox& box;

    // Negative log-likelihood in free coordinates, with its gradient when
    // `grad` is non-null; +inf if the kernel matrix cannot be factorized.
    double operator()(const Eigen::VectorXd& z, Eigen::VectorXd* grad) const {
        Eigen::VectorXd jac;
        const Eigen::VectorXd u = box_from_free(box, z, &jac);
        try {
            const ProfiledLikelihood pl = profiled_likelihood(Z, y, Hyperparameters::from_log(u), grad != nullptr);
            if (!std::isfinite(pl.value)) return std::numeric_limits<double>::infinity();
            if (grad) *grad = -(pl.gradient.array() * jac.array()).matrix();
            return -pl.value;
        } catch (const SingularKernel&) {
            return std::numeric_limits<double>::infinity();
        }
    }
};

struct LocalOptimum {
    Eigen::VectorXd z;
    double value = std::numeric_limits<double>::infinity();
};

// BFGS with Armijo backtracking by quadratic interpolation.
LocalOptimum minimize_bfgs(const Objective& f, Eigen::VectorXd z, int max_iterations, double gtol) {
    const Eigen::Index n = z.size();
    Eigen::VectorXd g(n);
    double fx = f(z, &g);
    if (!std::isfinite(fx)) return {z, fx};
    Eigen::MatrixXd H = Eigen::MatrixXd::Identity(n, n);
    int stalls = 0;
    for (int it = 0; it < max_iterations; ++it) {
        if (g.lpNorm<Eigen::Infinity>() < gtol) break;
        Eigen::VectorXd p = -H * g;
        double slope = g.dot(p);
        if (slope >= 0.0) {
            H.setIdentity();
            p = -g;
            slope = -g.squaredNorm();
        }
        double step = 1.0;
        Eigen::VectorXd z_new(n), g_new(n);
        double f_new = std::numeric_limits<double>::infinity();
        bool accepted = false;
        for (int ls = 0; ls < 40; ++ls) {
            z_new = z + step * p;
            f_new = f(z_new, nullptr);
            if (std::isfinite(f_new) && f_new <= fx + 1e-4 * step * slope) {
                f(z_new, &g_new);
                accepted = true;
                break;
            }
            // Minimizer of the quadratic through f(0), f'(0) and f(step), kept in [0.1, 0.5] step.
            const double denom = 2.0 * (f_new - fx - slope * step);
            const double trial = std::isfinite(f_new) && denom > 0.0 ? -slope * step * step / denom : 0.1 * step;
            step = std::clamp(trial, 0.1 * step, 0.5 * step);
        }
        if (!accepted) break;
        const Eigen::VectorXd s = z_new - z;
        const Eigen::VectorXd yk = g_new - g;
        const double sy = s.dot(yk);
        if (sy > 1e-12 * s.norm() * yk.norm()) {
            const double rho = 1.0 / sy;
            const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(n, n);
            H = (I - rho * s * yk.transpose()) * H * (I - rho * yk * s.transpose()) + rho * s * s.transpose();
        }
        stalls = (fx - f_new) < 1e-10 * (1.0 + std::abs(fx)) ? stalls + 1 : 0;
        z = z_new;
        g = g_new;
        fx = f_new;
        if (stalls >= 3) break;
    }
    return {z, fx};
}

}  // namespace

void Hyperparameters::validate() const {
    if (!(signal_variance > 0.0) || !std::isfinite(signal_variance))
        throw InvalidArgument("signal variance must be positive");
    if (lengthscales.size() < 1 || !(lengthscales.array() > 0.0).all() || !lengthscales.allFinite())
        throw InvalidArgument("lengthscales must be strictly positive");
    if (!(noise_variance >= 0.0) || !std::isfinite(noise_variance))
        throw InvalidArgument("noise variance must be non-negative");
}

Eigen::VectorXd Hyperparameters::to_log() const {
    const Eigen::Index d = dim();
    Eigen::VectorXd u(d + 2);
    u[0] = std::log(signal_variance);
    u.segment(1, d) = lengthscales.array().log().matrix();
    u[d + 1] = std::log(noise_variance);
    return u;
}

Hyperparameters Hyperparameters::from_log(const Eigen::Ref<const Eigen::VectorXd>& u) {
    const Eigen::Index d = u.size() - 2;
    if (d < 1) throw DimensionMismatch("log-hyperparameter vector too short");
    Hyperparameters hp;
    hp.signal_variance = std::exp(u[0]);
    hp.lengthscales = u.segment(1, d).array().exp().matrix();
    hp.noise_variance = std::exp(u[d + 1]);
    return hp;
}

Standardization Standardization::identity(Eigen::Index dim) {
    return {Eigen::VectorXd::Zero(dim), Eigen::VectorXd::Ones(dim), 0.0, 1.0};
}

Standardization Standardization::from_data(const Eigen::Ref<const Eigen::MatrixXd>& X,
                                           const Eigen::Ref<const Eigen::VectorXd>& y) {
    const double m = static_cast<double>(X.rows());
    Standardization s;
    s.input_mean = X.colwise().mean().transpose();
    s.input_scale.resize(X.cols());
    for (Eigen::Index j = 0; j < X.cols(); ++j) {
        const double var = (X.col(j).array() - s.input_mean[j]).square().sum() / std::max(m - 1.0, 1.0);
        s.input_scale[j] = var > 0.0 ? std::sqrt(var) : 1.0;
    }
    s.output_mean = y.mean();
    const double yvar = (y.array() - s.output_mean).square().sum() / std::max(m - 1.0, 1.0);
    s.output_scale = yvar > 0.0 ? std::sqrt(yvar) : 1.0;
    return s;
}

Eigen::MatrixXd Standardization::inputs(const Eigen::Ref<const Eigen::MatrixXd>& X) const {
    return ((X.rowwise() - input_mean.transpose()).array().rowwise() / input_scale.transpose().array()).matrix();
}

Eigen::VectorXd Standardization::outputs(const Eigen::Ref<const Eigen::VectorXd>& y) const {
    return ((y.array() - output_mean) / output_scale).matrix();
}

Eigen::MatrixXd rbf_kernel(const Eigen::Ref<const Eigen::MatrixXd>& A, const Eigen::Ref<const Eigen::MatrixXd>& B,
                           const Hyperparameters& hp) {
    if (A.cols() != hp.dim() || B.cols() != hp.dim()) throw DimensionMismatch("kernel input dimension mismatch");
    const Eigen::MatrixXd As = A.array().rowwise() / hp.lengthscales.transpose().array();
    const Eigen::MatrixXd Bs = B.array().rowwise() / hp.lengthscales.transpose().array();
    Eigen::MatrixXd d2 = (-2.0 * As * Bs.transpose()).colwise() + As.rowwise().squaredNorm();
    d2.rowwise() += Bs.rowwise().squaredNorm().transpose();
    return hp.signal_variance * (-0.5 * d2.array().cwiseMax(0.0)).exp().matrix();
}

Eigen::MatrixXd linear_basis(const Eigen::Ref<const Eigen::MatrixXd>& X) {
    Eigen::MatrixXd F(X.rows(), X.cols() + 1);
    F.col(0).setOnes();
    F.rightCols(X.cols()) = X;
    return F;
}

double log_marginal_likelihood(const Eigen::Ref<const Eigen::MatrixXd>& X, const Eigen::Ref<const Eigen::VectorXd>& y,
                               const Hyperparameters& hp, const Eigen::Ref<const Eigen::VectorXd>& mean_coeffs) {
    hp.validate();
    if (X.rows() != y.size()) throw DimensionMismatch("X and y differ in length");
    if (mean_coeffs.size() != X.cols() + 1) throw DimensionMismatch("mean coefficients must have d + 1 entries");
    Eigen::MatrixXd K = rbf_kernel(X, X, hp);
    K.diagonal().array() += hp.noise_variance;
    const auto llt = factorize_or_throw(K);
    const Eigen::VectorXd r = y - linear_basis(X) * mean_coeffs;
    const Eigen::VectorXd alpha = llt.solve(r);
    const double logdet = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
    return -0.5 * r.dot(alpha) - 0.5 * logdet - 0.5 * static_cast<double>(y.size()) * kLog2Pi;
}

ProfiledLikelihood profiled_log_likelihood(const Eigen::Ref<const Eigen::MatrixXd>& X,
                                           const Eigen::Ref<const Eigen::VectorXd>& y, const Hyperparameters& hp) {
    return profiled_likelihood(X, y, hp, true);
}

EmulatorModel EmulatorModel::fit(const Eigen::Ref<const Eigen::MatrixXd>& X, const Eigen::Ref<const Eigen::VectorXd>& y,
                                 const FitOptions& options) {
    const Eigen::Index m = X.rows();
    const Eigen::Index d = X.cols();
    if (m < 2) throw InvalidArgument("at least two training points required");
    if (y.size() != m) throw DimensionMismatch("X and y differ in length");
    if (options.restarts < 1) throw InvalidArgument("restarts must be >= 1");
    if (!X.allFinite() || !y.allFinite()) throw InvalidArgument("training data must be finite");

    const Standardization scaling = Standardization::from_data(X, y);
    const Eigen::MatrixXd Z = scaling.inputs(X);
    const Eigen::VectorXd yt = scaling.outputs(y);
    const bool degenerate = (y.array() == y[0]).all();

    const LogBox box = log_box(options.bounds, d);
    const Objective objective{Z, yt, box};

    LocalOptimum best;
    for (int r = 0; r < options.restarts; ++r) {
        Eigen::VectorXd u(d + 2);
        if (r == 0) {
            u[0] = 0.0;
            u.segment(1, d).setZero();
            u[d + 1] = std::log(1e-6);
            u = u.cwiseMax(box.lo).cwiseMin(box.hi);
        } else {
            Rng rng(derive_seed(options.seed, static_cast<std::uint64_t>(r)));
            for (Eigen::Index i = 0; i < u.size(); ++i) u[i] = rng.uniform(box.lo[i], box.hi[i]);
        }
        const LocalOptimum local =
            minimize_bfgs(objective, free_from_box(box, u), options.max_iterations, options.gradient_tolerance);
        if (local.value < best.value) best = local;
    }
    if (!std::isfinite(best.value)) throw SingularKernel("no restart produced a factorizable kernel matrix");

    const Hyperparameters hp = Hyperparameters::from_log(box_from_free(box, best.z, nullptr));
    const ProfiledLikelihood pl = profiled_log_likelihood(Z, yt, hp);
    EmulatorModel model = condition(X, y, hp, pl.mean_coeffs, scaling);
    if (degenerate) model.warnings_.push_back("DegenerateTargets: training targets are constant");
    return model;
}

EmulatorModel EmulatorModel::condition(const Eigen::Ref<const Eigen::MatrixXd>& X,
                                       const Eigen::Ref<const Eigen::VectorXd>& y, const Hyperparameters& hp,
                                       const Eigen::Ref<const Eigen::VectorXd>& mean_coeffs,
                                       const Standardization& scaling) {
    hp.validate();
    if (X.rows() < 1 || X.rows() != y.size()) throw DimensionMismatch("X and y differ in length");
    if (X.cols() != hp.dim()) throw DimensionMismatch("hyperparameter dimension does not match inputs");
    if (mean_coeffs.size() != X.cols() + 1) throw DimensionMismatch("mean coefficients must have d + 1 entries");
    EmulatorModel model;
    model.X_ = X;
    model.y_ = y;
    model.scaling_ = scaling;
    model.hp_ = hp;
    model.beta_ = mean_coeffs;
    model.Z_ = scaling.inputs(X);
    model.factorize();
    return model;
}

void EmulatorModel::factorize() {
    const Eigen::MatrixXd Kf = rbf_kernel(Z_, Z_, hp_);
    for (;;) {
        Eigen::MatrixXd K = Kf;
        K.diagonal().array() += hp_.noise_variance;
        Eigen::LLT<Eigen::MatrixXd> llt(K);
        if (llt.info() == Eigen::Success) {
            chol_ = llt.matrixL();
            alpha_ = llt.solve(scaling_.outputs(y_) - linear_basis(Z_) * beta_);
            return;
        }
        if (hp_.noise_variance >= kMaxJitter) throw SingularKernel("kernel matrix singular even at maximum jitter");
        const double next = hp_.noise_variance > 0.0 ? hp_.noise_variance * 10.0 : 1e-10;
        warnings_.push_back("jitter escalated to " + std::to_string(std::min(next, kMaxJitter)));
        hp_.noise_variance = std::min(next, kMaxJitter);
    }
}

void EmulatorModel::predict_batch(const Eigen::Ref<const Eigen::MatrixXd>& thetas, Eigen::Ref<Eigen::VectorXd> means,
                                  Eigen::Ref<Eigen::VectorXd> variances) const {
    if (thetas.rows() != input_dim()) throw DimensionMismatch("parameter dimension does not match emulator");
    if (means.size() != thetas.cols() || variances.size() != thetas.cols())
        throw DimensionMismatch("output buffers must have one entry per column");
    const Eigen::MatrixXd Zs = scaling_.inputs(thetas.transpose());
    const Eigen::MatrixXd Ks = rbf_kernel(Z_, Zs, hp_);  // M x N
    const double s = scaling_.output_scale;
    means = (scaling_.output_mean + s * (linear_basis(Zs) * beta_ + Ks.transpose() * alpha_).array()).matrix();
    const Eigen::MatrixXd V = chol_.triangularView<Eigen::Lower>().solve(Ks);
    variances = (s * s * (hp_.signal_variance - V.colwise().squaredNorm().transpose().array()).cwiseMax(0.0)).matrix();
}

Prediction EmulatorModel::predict(const Eigen::Ref<const Eigen::VectorXd>& theta) const {
    if (theta.size() != input_dim()) throw DimensionMismatch("parameter dimension does not match emulator");
    Eigen::VectorXd m(1), v(1);
    predict_batch(theta, m, v);
    return {m[0], v[0]};
}

double EmulatorModel::log_marginal_likelihood() const {
    return gp::log_marginal_likelihood(Z_, scaling_.outputs(y_), hp_, beta_);
}

double EmulatorModel::signal_variance() const noexcept {
    return hp_.signal_variance * scaling_.output_scale * scaling_.output_scale;
}

double EmulatorModel::noise_variance() const noexcept {
    return hp_.noise_variance * scaling_.output_scale * scaling_.output_scale;
}

double log_marginal_likelihood(const EmulatorModel& model, const Eigen::Ref<const Eigen::MatrixXd>& X,
                               const Eigen::Ref<const Eigen::VectorXd>& y) {
    if (X.cols() != model.input_dim()) throw DimensionMismatch("input dimension does not match emulator");
    return log_marginal_likelihood(model.scaling().inputs(X), model.scaling().outputs(y), model.hyperparameters(),
                                   model.mean_coeffs());
}

double r_squared(const Eigen::Ref<const Eigen::VectorXd>& actual, const Eigen::Ref<const Eigen::VectorXd>& predicted) {
    if (actual.size() != predicted.size() || actual.size() == 0) throw DimensionMismatch("R^2 inputs differ in length");
    const double ss_res = (actual - predicted).squaredNorm();
    const double ss_tot = (actual.array() - actual.mean()).square().sum();
    if (ss_tot == 0.0) return ss_res == 0.0 ? 1.0 : -std::numeric_limits<double>::infinity();
    return 1.0 - ss_res / ss_tot;
}

EmulatorBank::EmulatorBank(std::vector<std::string> labels, std::vector<EmulatorModel> emulators)
    : labels_(std::move(labels)), emulators_(std::move(emulators)) {
    if (labels_.size() != emulators_.size()) throw DimensionMismatch("one label per emulator required");
    if (emulators_.empty()) throw InvalidArgument("emulator bank is empty");
    for (const auto& e : emulators_) {
        if (e.input_dim() != emulators_.front().input_dim())
            throw DimensionMismatch("emulators in a bank must share the input dimension");
    }
}

EmulatorBank EmulatorBank::fit(const Eigen::Ref<const Eigen::MatrixXd>& X, const Eigen::Ref<const Eigen::MatrixXd>& Y,
                               std::vector<std::string> labels, const FitOptions& options, int threads) {
    if (Y.rows() != X.rows()) throw DimensionMismatch("X and Y differ in row count");
    if (static_cast<Eigen::Index>(labels.size()) != Y.cols()) throw DimensionMismatch("one label per output column");
    std::vector<std::optional<EmulatorModel>> fitted(labels.size());
    const Eigen::MatrixXd Xc = X;
    const Eigen::MatrixXd Yc = Y;
    parallel_for(labels.size(), threads, [&](std::size_t j) {
        FitOptions opt = options;
        opt.seed = derive_seed(options.seed, static_cast<std::uint64_t>(j));
        fitted[j] = EmulatorModel::fit(Xc, Yc.col(static_cast<Eigen::Index>(j)), opt);
    });
    std::vector<EmulatorModel> models;
    models.reserve(fitted.size());
    for (auto& f : fitted) models.push_back(std::move(*f));
    return {std::move(labels), std::move(models)};
}

Eigen::Index EmulatorBank::input_dim() const { return emulators_.front().input_dim(); }

void EmulatorBank::evaluate(const Eigen::Ref<const Eigen::MatrixXd>& thetas, Eigen::MatrixXd& means,
                            Eigen::MatrixXd& variances) const {
    if (thetas.rows() != input_dim()) throw DimensionMismatch("parameter dimension does not match emulator bank");
    const Eigen::Index n = thetas.cols();
    means.resize(output_dim(), n);
    variances.resize(output_dim(), n);
    Eigen::VectorXd m(n), v(n);
    for (std::size_t j = 0; j < emulators_.size(); ++j) {
        emulators_[j].predict_batch(thetas, m, v);
        means.row(static_cast<Eigen::Index>(j)) = m.transpose();
        variances.row(static_cast<Eigen::Index>(j)) = v.transpose();
    }
}

EmulatorBank EmulatorBank::select(const std::vector<std::string>& labels) const {
    std::vector<EmulatorModel> picked;
    for (const auto& label : labels) {
        const auto it = std::find(labels_.begin(), labels_.end(), label);
        if (it == labels_.end()) throw InvalidArgument("no emulator for output '" + label + "'");
        picked.push_back(emulators_[static_cast<std::size_t>(it - labels_.begin())]);
    }
    return {labels, std::move(picked)};
}

BankPrediction predict_bank(const EmulatorBank& bank, const Eigen::Ref<const Eigen::MatrixXd>& thetas) {
    BankPrediction out;
    bank.evaluate(thetas, out.means, out.variances);
    return out;
}

}  // namespace gpenkf::gp
