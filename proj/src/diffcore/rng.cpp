#include "hav/diffcore/rng.hpp"

#include <sstream>

namespace hav::diff {

std::string Rng::save_state() const {
  std::ostringstream os;
  os << eng_ << " " << (have_spare_ ? 1 : 0);
  if (have_spare_) {
    os.precision(17);
    os << " " << spare_;
  }
  return os.str();
}

void Rng::load_state(const std::string& s) {
  std::istringstream is(s);
  is >> eng_;
  int hs = 0;
  is >> hs;
  have_spare_ = hs != 0;
  if (have_spare_) is >> spare_;
}

} // namespace hav::diff
