#pragma once

#include "crisisscope/error.hpp"
#include "crisisscope/text.hpp"
#include "crisisscope/corpus.hpp"
#include "crisisscope/linguistic.hpp"
#include "crisisscope/encoder.hpp"
#include "crisisscope/queries.hpp"
#include "crisisscope/features.hpp"
#include "crisisscope/models.hpp"
#include "crisisscope/summarize.hpp"
#include "crisisscope/evaluate.hpp"
#include "crisisscope/http_backends.hpp"
#include "crisisscope/config.hpp"
#include "crisisscope/session.hpp"
#include "crisisscope/service.hpp"
#include "crisisscope/cli.hpp"
