#pragma once

// FMAT container: "FMAT", rows (u32 LE), cols (u32 LE), then rows*cols
// row-major float32 LE values.

#include <istream>
#include <ostream>
#include <string>

#include "glutag/ctc.hpp"

namespace glutag {

using FloatMatrix = Grid<float>;

void write_fmat(std::ostream& out, const FloatMatrix& m);
FloatMatrix read_fmat(std::istream& in);

void write_fmat_file(const std::string& path, const FloatMatrix& m);
FloatMatrix read_fmat_file(const std::string& path);

}  // namespace glutag
