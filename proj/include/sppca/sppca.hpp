#pragma once

#include "sppca/dense_matrix.hpp"
#include "sppca/error.hpp"
#include "sppca/file_stream.hpp"
#include "sppca/matcore.hpp"
#include "sppca/memory_ledger.hpp"
#include "sppca/metrics.hpp"
#include "sppca/parallel.hpp"
#include "sppca/random.hpp"
#include "sppca/rqb.hpp"
#include "sppca/sketch.hpp"
#include "sppca/synth.hpp"
