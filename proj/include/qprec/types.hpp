/**
 * @file types.hpp
 * @brief Common numeric aliases and the error hierarchy used across qprec.
 */
#pragma once

#include <Eigen/Dense>

#include <complex>
#include <stdexcept>
#include <string>

namespace qprec {

using cdouble = std::complex<double>;
using CMatrix = Eigen::MatrixXcd;
using CVector = Eigen::VectorXcd;
using RMatrix = Eigen::MatrixXd;
using RVector = Eigen::VectorXd;

/// Base class of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Argument outside an operation's domain (bad dimensions, bad ranges).
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// A numerical procedure could not produce a usable result.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// Reading or writing a persisted artifact failed.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace qprec
