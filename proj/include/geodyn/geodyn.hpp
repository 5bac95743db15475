#pragma once

#include "geodyn/errors.hpp"
#include "geodyn/spd_core.hpp"
#include "geodyn/kernels.hpp"
#include "geodyn/autodiff.hpp"
#include "geodyn/algebra.hpp"
#include "geodyn/manifold_ops.hpp"
#include "geodyn/model.hpp"
#include "geodyn/dataset.hpp"
#include "geodyn/training.hpp"
#include "geodyn/data.hpp"
#include "geodyn/binary_io.hpp"
#include "geodyn/dataset_io.hpp"
#include "geodyn/config_json.hpp"
#include "geodyn/checkpoint.hpp"
