#pragma once

#include "gsexp/classify.hpp"
#include "gsexp/expr.hpp"
#include "gsexp/mc.hpp"
#include "gsexp/philox.hpp"
#include "gsexp/problem_file.hpp"
#include "gsexp/quad.hpp"
#include "gsexp/report.hpp"
#include "gsexp/scale.hpp"
