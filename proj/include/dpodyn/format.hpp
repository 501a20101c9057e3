#pragma once

#include <string>

namespace dpodyn {

// Shortest decimal that parses back to the identical double ("nan", "inf",
// "-inf" for non-finite values).
std::string format_number(double value);

}  // namespace dpodyn
