#pragma once

#include <stdexcept>
#include <string>

namespace crcm {

// Malformed or inconsistent input data (JSONL records, invariant violations).
class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

// Embedding provider failures: transport, bad status, dimension mismatch.
class EmbeddingError : public std::runtime_error {
 public:
  explicit EmbeddingError(const std::string& what) : std::runtime_error(what) {}
};

// Model file problems: wrong magic, version or dimension mismatch, truncation.
class ModelIoError : public std::runtime_error {
 public:
  explicit ModelIoError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace crcm
