#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace mcsbp
{
/// Per-type vector: states x, test functions f, jump sizes z.
using TypedVector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Invalid model input (bad mechanism, bad measure, violated precondition).
class ModelError : public std::invalid_argument
{
  public:
    using std::invalid_argument::invalid_argument;
};

/// A numerical routine failed to reach its tolerance.
class NumericalError : public std::runtime_error
{
  public:
    NumericalError(const std::string& what, double achieved)
        : std::runtime_error(what + " (achieved error " + std::to_string(achieved) + ")"),
          achieved_(achieved)
    {
    }

    double achieved() const noexcept { return achieved_; }

  private:
    double achieved_;
};

inline bool is_nonnegative(const TypedVector& v)
{
    return (v.array() >= 0.0).all();
}

inline TypedVector unit_vector(Eigen::Index d, Eigen::Index i)
{
    TypedVector e = TypedVector::Zero(d);
    e(i) = 1.0;
    return e;
}
}  // namespace mcsbp
