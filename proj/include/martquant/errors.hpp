#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace martquant {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class DomainError : public Error {
public:
    using Error::Error;
};

class QuadratureError : public Error {
public:
    using Error::Error;
};

class EmptyCellError : public Error {
public:
    EmptyCellError(std::size_t cell, const std::string& what)
        : Error(what), cell_(cell) {}
    std::size_t cell() const noexcept { return cell_; }

private:
    std::size_t cell_;
};

class OutOfHullError : public Error {
public:
    using Error::Error;
};

class SupportError : public Error {
public:
    using Error::Error;
};

class DimensionMismatch : public Error {
public:
    using Error::Error;
};

class DivisibilityError : public Error {
public:
    using Error::Error;
};

class BudgetExceeded : public Error {
public:
    using Error::Error;
};

class OutOfScopeError : public Error {
public:
    using Error::Error;
};

// Raised when a one-step image of a source point leaves the target hull.
class HullViolation : public Error {
public:
    HullViolation(std::size_t source, double excess, const std::string& what)
        : Error(what), source_(source), excess_(excess) {}
    std::size_t source_index() const noexcept { return source_; }
    double excess() const noexcept { return excess_; }

private:
    std::size_t source_;
    double excess_;
};

}  // namespace martquant
