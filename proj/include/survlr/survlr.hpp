#pragma once

#include "survlr/error.hpp"
#include "survlr/evaluate.hpp"
#include "survlr/io.hpp"
#include "survlr/logrank_loss.hpp"
#include "survlr/network.hpp"
#include "survlr/optim.hpp"
#include "survlr/plot.hpp"
#include "survlr/preprocess.hpp"
#include "survlr/simulate.hpp"
#include "survlr/special.hpp"
#include "survlr/survival.hpp"
#include "survlr/train.hpp"
