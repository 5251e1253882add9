#include "hydrofix/correction.hpp"

#include "hydrofix/error.hpp"

namespace hydrofix {

void Correction::validate() const {
  if (p0 == p1) throw InvalidArgument("correction " + id + ": endpoints coincide");
  if (kind == CorrectionKind::HorseShoe && !(width > 0.0))
    throw InvalidArgument("correction " + id + ": horseshoe width must be positive");
}

const char* to_string(CorrectionKind kind) { return kind == CorrectionKind::Line ? "line" : "horseshoe"; }

}  // namespace hydrofix
