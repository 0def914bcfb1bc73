#ifndef PCHECK_PCHECK_HPP
#define PCHECK_PCHECK_HPP

#include "pcheck/cluster.hpp"
#include "pcheck/collector.hpp"
#include "pcheck/config.hpp"
#include "pcheck/contrast.hpp"
#include "pcheck/corpus.hpp"
#include "pcheck/error.hpp"
#include "pcheck/harness.hpp"
#include "pcheck/http_provider.hpp"
#include "pcheck/judge.hpp"
#include "pcheck/mock.hpp"
#include "pcheck/parallel.hpp"
#include "pcheck/pipeline.hpp"
#include "pcheck/prompts.hpp"
#include "pcheck/providers.hpp"
#include "pcheck/reward.hpp"
#include "pcheck/summarizer.hpp"
#include "pcheck/util.hpp"
#include "pcheck/weighting.hpp"

#endif  // PCHECK_PCHECK_HPP
