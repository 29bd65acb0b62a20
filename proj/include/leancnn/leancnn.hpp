#pragma once

#include "leancnn/adam.hpp"
#include "leancnn/artifacts.hpp"
#include "leancnn/bench.hpp"
#include "leancnn/checkpoint.hpp"
#include "leancnn/config.hpp"
#include "leancnn/dataset.hpp"
#include "leancnn/error.hpp"
#include "leancnn/image.hpp"
#include "leancnn/kernels.hpp"
#include "leancnn/layers.hpp"
#include "leancnn/log.hpp"
#include "leancnn/loss.hpp"
#include "leancnn/metrics.hpp"
#include "leancnn/model.hpp"
#include "leancnn/parallel.hpp"
#include "leancnn/rng.hpp"
#include "leancnn/tensor.hpp"
#include "leancnn/train.hpp"
