#pragma once

#include "sokg/canonicalizer.hpp"
#include "sokg/corpus.hpp"
#include "sokg/document.hpp"
#include "sokg/extraction.hpp"
#include "sokg/graph.hpp"
#include "sokg/judge.hpp"
#include "sokg/json_recovery.hpp"
#include "sokg/mock_providers.hpp"
#include "sokg/parallel.hpp"
#include "sokg/pipeline.hpp"
#include "sokg/providers.hpp"
#include "sokg/qa.hpp"
#include "sokg/remote_providers.hpp"
#include "sokg/report.hpp"
#include "sokg/retention.hpp"
#include "sokg/text.hpp"
