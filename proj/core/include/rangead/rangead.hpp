#pragma once

#include "rangead/dataset.hpp"
#include "rangead/error.hpp"
#include "rangead/eval.hpp"
#include "rangead/knn.hpp"
#include "rangead/matrix.hpp"
#include "rangead/mlp.hpp"
#include "rangead/range_detector.hpp"
