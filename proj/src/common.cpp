#include "coglo/common.h"

namespace coglo {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::validation: return "validation";
    case ErrorCode::not_found: return "not_found";
    case ErrorCode::conflict: return "conflict";
    case ErrorCode::expired: return "expired";
    case ErrorCode::size_guard: return "size_guard";
    case ErrorCode::internal: return "internal";
  }
  return "internal";
}

}  // namespace coglo
