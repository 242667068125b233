#pragma once

#include "fiona/autodiff.hpp"
#include "fiona/checkpoint.hpp"
#include "fiona/cka.hpp"
#include "fiona/dataio.hpp"
#include "fiona/eer.hpp"
#include "fiona/error.hpp"
#include "fiona/labels.hpp"
#include "fiona/models.hpp"
#include "fiona/objective.hpp"
#include "fiona/optim.hpp"
#include "fiona/rng.hpp"
#include "fiona/synth.hpp"
#include "fiona/tensor.hpp"
#include "fiona/trainer.hpp"
