#ifndef PAB_IMAGE_IO_HPP_
#define PAB_IMAGE_IO_HPP_

#include <string>

#include "pab/tensor.hpp"

namespace pab {

// 8-bit binary PGM; values clamped to [0,1] and scaled as round(255*p).
void write_pgm(const std::string& path, int h, int w, const double* values);

// 8-bit binary PPM from three channel planes laid out [h*w] each.
void write_ppm(const std::string& path, int h, int w, const double* r, const double* g,
               const double* b);

}  // namespace pab

#endif  // PAB_IMAGE_IO_HPP_
