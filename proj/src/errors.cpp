#include "eyeadapt/errors.hpp"

namespace eyeadapt {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kConfig:
      return "config";
    case ErrorKind::kData:
      return "data";
    case ErrorKind::kDivergence:
      return "divergence";
  }
  return "unknown";
}

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kConfig:
      return 2;
    case ErrorKind::kData:
      return 3;
    case ErrorKind::kDivergence:
      return 4;
  }
  return 1;
}

}  // namespace eyeadapt
