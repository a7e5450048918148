#pragma once

#include "wavesim/errors.hpp"
#include "wavesim/spline.hpp"
#include "wavesim/multiresolution.hpp"
#include "wavesim/linalg.hpp"
#include "wavesim/expr.hpp"
#include "wavesim/waveform.hpp"
#include "wavesim/netlist.hpp"
#include "wavesim/mna.hpp"
#include "wavesim/transient.hpp"
#include "wavesim/galerkin.hpp"
#include "wavesim/wavelet_solver.hpp"
#include "wavesim/report.hpp"
