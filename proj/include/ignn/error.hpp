#pragma once

#include <stdexcept>
#include <string>

namespace ignn {

enum class Errc {
  invalid_argument,  // bad shapes, bad ids, contract violations
  io,                // missing or unreadable files
  data,              // malformed file content
  mismatch,          // checkpoint/config hash disagreement
  diverged,          // non-finite loss during training
  nonfinite,         // non-finite value detected in forward/backward
};

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what) : std::runtime_error(what), code_(code) {}
  Errc code() const { return code_; }

 private:
  Errc code_;
};

}  // namespace ignn
