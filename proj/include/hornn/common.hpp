#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace hornn {

// Thrown when a caller breaks a documented precondition (shape mismatch,
// out-of-range id, invalid hyperparameter).
struct ContractViolation : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

enum class Pooling { kPlain, kMax, kFofe, kGated };
enum class Activation { kSigmoid, kRelu, kTanh };
enum class Schedule { kValidationHalving, kText8 };

inline std::string to_string(Pooling p) {
  switch (p) {
    case Pooling::kPlain: return "plain";
    case Pooling::kMax: return "max";
    case Pooling::kFofe: return "fofe";
    case Pooling::kGated: return "gated";
  }
  return "?";
}

inline std::string to_string(Activation a) {
  switch (a) {
    case Activation::kSigmoid: return "sigmoid";
    case Activation::kRelu: return "relu";
    case Activation::kTanh: return "tanh";
  }
  return "?";
}

inline std::string to_string(Schedule s) {
  return s == Schedule::kValidationHalving ? "validation_halving" : "text8";
}

inline Pooling pooling_from_string(std::string_view s) {
  if (s == "plain") return Pooling::kPlain;
  if (s == "max") return Pooling::kMax;
  if (s == "fofe") return Pooling::kFofe;
  if (s == "gated") return Pooling::kGated;
  throw ContractViolation("unknown pooling '" + std::string(s) +
                          "' (expected plain|max|fofe|gated)");
}

inline Activation activation_from_string(std::string_view s) {
  if (s == "sigmoid") return Activation::kSigmoid;
  if (s == "relu") return Activation::kRelu;
  if (s == "tanh") return Activation::kTanh;
  throw ContractViolation("unknown activation '" + std::string(s) +
                          "' (expected sigmoid|relu|tanh)");
}

inline Schedule schedule_from_string(std::string_view s) {
  if (s == "validation_halving") return Schedule::kValidationHalving;
  if (s == "text8") return Schedule::kText8;
  throw ContractViolation("unknown schedule '" + std::string(s) +
                          "' (expected validation_halving|text8)");
}

// FNV-1a 64-bit; used to fingerprint corpora and vocabularies.
inline std::uint64_t fnv1a64(const void* data, std::size_t len,
                             std::uint64_t h = 0xcbf29ce484222325ull) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::uint64_t fnv1a64(std::string_view s,
                             std::uint64_t h = 0xcbf29ce484222325ull) {
  return fnv1a64(s.data(), s.size(), h);
}

}  // namespace hornn
