#pragma once

#include "safer/error.hpp"
#include "safer/expansion.hpp"
#include "safer/metrics.hpp"
#include "safer/patcher.hpp"
#include "safer/projector.hpp"
#include "safer/subspace.hpp"
#include "safer/synth.hpp"
#include "safer/tensor_store.hpp"
