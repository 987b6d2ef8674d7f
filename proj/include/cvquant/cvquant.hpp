#pragma once

#include "cvquant/color.hpp"
#include "cvquant/confusion.hpp"
#include "cvquant/equivalence.hpp"
#include "cvquant/experiments.hpp"
#include "cvquant/image.hpp"
#include "cvquant/png_io.hpp"
#include "cvquant/profile_json.hpp"
#include "cvquant/quantize.hpp"
#include "cvquant/rng.hpp"
#include "cvquant/sidecar.hpp"
