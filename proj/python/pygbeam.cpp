#include <pybind11/pybind11.h>
PYBIND11_MODULE(pygbeam, m) { m.doc() = "stub"; }
