#include "lcdnet/errors.hpp"

namespace lcdnet {

const char* errc_name(Errc code) noexcept {
  switch (code) {
    case Errc::kArgument: return "argument";
    case Errc::kState: return "state";
    case Errc::kBind: return "bind";
    case Errc::kConnect: return "connect";
    case Errc::kFlow: return "flow";
    case Errc::kSize: return "size";
    case Errc::kResource: return "resource";
    case Errc::kTimeout: return "timeout";
    case Errc::kConfig: return "config";
    case Errc::kInvariant: return "invariant";
  }
  return "unknown";
}

}  // namespace lcdnet
