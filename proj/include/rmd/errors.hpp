#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace rmd {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
public:
    using Error::Error;
};

class InvalidMatrix : public Error {
public:
    using Error::Error;
};

class InvalidSampleSize : public Error {
public:
    using Error::Error;
};

/// A symmetric input had an eigenvalue below -n^(-b).
class NotPSD : public Error {
public:
    NotPSD(const std::string& what, double min_eigenvalue)
        : Error(what), min_eigenvalue_(min_eigenvalue) {}
    double min_eigenvalue() const noexcept { return min_eigenvalue_; }

private:
    double min_eigenvalue_;
};

class DimensionError : public Error {
public:
    using Error::Error;
};

/// g returned a non-finite value; carries the evaluation point.
class ModelEvaluationError : public Error {
public:
    ModelEvaluationError(const std::string& what, Vector theta, Vector alpha, Vector beta)
        : Error(what), theta_(std::move(theta)), alpha_(std::move(alpha)), beta_(std::move(beta)) {}
    const Vector& theta() const noexcept { return theta_; }
    const Vector& alpha() const noexcept { return alpha_; }
    const Vector& beta() const noexcept { return beta_; }

private:
    Vector theta_, alpha_, beta_;
};

class SolverError : public Error {
public:
    using Error::Error;
};

class GcvDegenerate : public Error {
public:
    using Error::Error;
};

class DegreesOfFreedomError : public Error {
public:
    DegreesOfFreedomError(const std::string& what, int r_sigma, int r_alpha)
        : Error(what), r_sigma_(r_sigma), r_alpha_(r_alpha) {}
    int r_sigma() const noexcept { return r_sigma_; }
    int r_alpha() const noexcept { return r_alpha_; }

private:
    int r_sigma_, r_alpha_;
};

class EquilibriumError : public Error {
public:
    EquilibriumError(const std::string& what, std::vector<double> residual_tail)
        : Error(what), residual_tail_(std::move(residual_tail)) {}
    const std::vector<double>& residual_tail() const noexcept { return residual_tail_; }

private:
    std::vector<double> residual_tail_;
};

class InsufficientData : public Error {
public:
    InsufficientData(const std::string& what, int state)
        : Error(what), state_(state) {}
    int state() const noexcept { return state_; }

private:
    int state_;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

/// More than the allowed share of Monte Carlo replications failed.
class ErrorBudgetExceeded : public Error {
public:
    using Error::Error;
};

}  // namespace rmd
