#include "errors.hpp"

namespace csna {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Dimension: return "dimension error";
    case ErrorKind::Index: return "index error";
    case ErrorKind::Contract: return "contract error";
    case ErrorKind::Parse: return "parse error";
    case ErrorKind::Io: return "io error";
    case ErrorKind::Numeric: return "numeric error";
  }
  return "error";
}

}  // namespace csna
