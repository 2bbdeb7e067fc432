#include "pab/image_io.hpp"

#include <cmath>
#include <fstream>

#include "pab/common.hpp"

namespace pab {

namespace {
unsigned char to_byte(double p) {
    const double c = std::min(1.0, std::max(0.0, p));
    return static_cast<unsigned char>(std::lround(255.0 * c));
}
}  // namespace

void write_pgm(const std::string& path, int h, int w, const double* values) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot write " + path);
    f << "P5\n" << w << " " << h << "\n255\n";
    for (int i = 0; i < h * w; ++i) {
        const unsigned char b = to_byte(values[i]);
        f.write(reinterpret_cast<const char*>(&b), 1);
    }
    if (!f) throw DataError("write failed for " + path);
}

void write_ppm(const std::string& path, int h, int w, const double* r, const double* g,
               const double* b) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot write " + path);
    f << "P6\n" << w << " " << h << "\n255\n";
    for (int i = 0; i < h * w; ++i) {
        const unsigned char px[3] = {to_byte(r[i]), to_byte(g[i]), to_byte(b[i])};
        f.write(reinterpret_cast<const char*>(px), 3);
    }
    if (!f) throw DataError("write failed for " + path);
}

}  // namespace pab
