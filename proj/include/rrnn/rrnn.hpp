#pragma once

#include "rrnn/activation.hpp"
#include "rrnn/benchmark.hpp"
#include "rrnn/certificates.hpp"
#include "rrnn/evaluation.hpp"
#include "rrnn/io.hpp"
#include "rrnn/lstm.hpp"
#include "rrnn/metrics.hpp"
#include "rrnn/model_zoo.hpp"
#include "rrnn/models.hpp"
#include "rrnn/numerics.hpp"
#include "rrnn/parallel.hpp"
#include "rrnn/training.hpp"
