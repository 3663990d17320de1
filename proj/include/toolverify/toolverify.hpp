#pragma once

#include "toolverify/backend.hpp"
#include "toolverify/call.hpp"
#include "toolverify/datagen.hpp"
#include "toolverify/error.hpp"
#include "toolverify/eval.hpp"
#include "toolverify/live.hpp"
#include "toolverify/paramgen.hpp"
#include "toolverify/prompts.hpp"
#include "toolverify/registry.hpp"
#include "toolverify/remote_backend.hpp"
#include "toolverify/rng.hpp"
#include "toolverify/scripted_backend.hpp"
#include "toolverify/selector.hpp"
#include "toolverify/similarity.hpp"
#include "toolverify/text.hpp"
#include "toolverify/vq_cache.hpp"
