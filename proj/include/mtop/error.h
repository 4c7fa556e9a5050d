#ifndef MTOP_ERROR_H_
#define MTOP_ERROR_H_

#include <stdexcept>
#include <string>

namespace mtop {

// Root of every exception thrown by the toolkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// An Error tagged with a module-specific reason code.
template <typename Kind>
class KindedError : public Error {
 public:
  KindedError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

}  // namespace mtop

#endif  // MTOP_ERROR_H_
