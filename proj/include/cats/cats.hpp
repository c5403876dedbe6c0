#pragma once

#include "cats/activation.hpp"
#include "cats/bench.hpp"
#include "cats/calibration.hpp"
#include "cats/errors.hpp"
#include "cats/io.hpp"
#include "cats/kernel.hpp"
#include "cats/linalg.hpp"
#include "cats/model.hpp"
#include "cats/weight_file.hpp"
