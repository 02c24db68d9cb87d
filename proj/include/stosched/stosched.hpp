#pragma once

#include "stosched/commands.hpp"
#include "stosched/config.hpp"
#include "stosched/distributed.hpp"
#include "stosched/mare.hpp"
#include "stosched/model.hpp"
#include "stosched/optimizer.hpp"
#include "stosched/schedule.hpp"
#include "stosched/simulate.hpp"
