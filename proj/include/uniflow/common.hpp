#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

namespace uniflow {

// Keeps an argument out of template deduction so nullptr can be passed for
// optional output pointers.
template <class T>
using NoDeduce = std::type_identity_t<T>;

// Dense row-major matrix. Spatial grids are stored as (h*w) x channels with
// pixel (r, c) at row r*w + c.
template <class T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline std::string shape_str(Eigen::Index rows, Eigen::Index cols) {
  return "[" + std::to_string(rows) + "x" + std::to_string(cols) + "]";
}

template <class A, class B>
void check_same_shape(const A& a, const B& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw Error(std::string(what) + ": shape mismatch " +
                shape_str(a.rows(), a.cols()) + " vs " +
                shape_str(b.rows(), b.cols()));
  }
}

template <class A>
void check_shape(const A& a, Eigen::Index rows, Eigen::Index cols,
                 const char* what) {
  if (a.rows() != rows || a.cols() != cols) {
    throw Error(std::string(what) + ": shape mismatch " +
                shape_str(a.rows(), a.cols()) + " vs expected " +
                shape_str(rows, cols));
  }
}

template <class A>
bool all_finite(const A& a) {
  return a.allFinite();
}

template <class To, class From>
Mat<To> cast(const Mat<From>& m) {
  return m.template cast<To>();
}

}  // namespace uniflow
