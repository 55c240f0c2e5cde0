#pragma once

// Umbrella header.

#include "sigsurv/compression.hpp"
#include "sigsurv/config.hpp"
#include "sigsurv/cox.hpp"
#include "sigsurv/embedding.hpp"
#include "sigsurv/error.hpp"
#include "sigsurv/ingest.hpp"
#include "sigsurv/metrics.hpp"
#include "sigsurv/pipeline.hpp"
#include "sigsurv/random.hpp"
#include "sigsurv/signature.hpp"
#include "sigsurv/step_function.hpp"
#include "sigsurv/synthetic.hpp"
#include "sigsurv/text_io.hpp"
