#pragma once

#include "activeid/bounds.hpp"
#include "activeid/design.hpp"
#include "activeid/error.hpp"
#include "activeid/experiment.hpp"
#include "activeid/geometry.hpp"
#include "activeid/identification.hpp"
#include "activeid/linalg.hpp"
#include "activeid/lti.hpp"
#include "activeid/mixture.hpp"
#include "activeid/random.hpp"
#include "activeid/scenarios.hpp"
