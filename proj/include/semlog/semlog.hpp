#pragma once

// Umbrella header for the core library (remote clients excluded; include
// semlog/remote.hpp separately).

#include "semlog/embedding.hpp"
#include "semlog/encoder_training.hpp"
#include "semlog/errors.hpp"
#include "semlog/evaluation.hpp"
#include "semlog/ingestion.hpp"
#include "semlog/rebalancer.hpp"
#include "semlog/template_parser.hpp"
#include "semlog/vec.hpp"
#include "semlog/vector_index.hpp"
