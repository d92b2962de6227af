// mtsfm.hpp - umbrella header.

#pragma once

#include "mtsfm/analysis.hpp"
#include "mtsfm/bessel.hpp"
#include "mtsfm/cli.hpp"
#include "mtsfm/core.hpp"
#include "mtsfm/fft.hpp"
#include "mtsfm/gbf.hpp"
#include "mtsfm/optimizer.hpp"
#include "mtsfm/synthesis.hpp"
