#include "cores/numfmt.hpp"

#include <cstdio>
#include <string>

namespace cores {

std::string format_double(double v) {
    char buf[64];
    for (int prec = 1; prec <= 17; ++prec) {
        std::snprintf(buf, sizeof(buf), "%.*g", prec, v);
        if (std::stod(buf) == v) return buf;
    }
    return buf;
}

}  // namespace cores
