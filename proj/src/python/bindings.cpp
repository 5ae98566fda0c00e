#include <pybind11/pybind11.h>
PYBIND11_MODULE(_safeil, m) { m.doc() = "placeholder"; }
