#pragma once

#include "relabel/analysis.hpp"
#include "relabel/annotate.hpp"
#include "relabel/augment.hpp"
#include "relabel/error.hpp"
#include "relabel/geometry.hpp"
#include "relabel/label_map.hpp"
#include "relabel/pooling.hpp"
#include "relabel/quant.hpp"
#include "relabel/rng.hpp"
#include "relabel/sparse.hpp"
#include "relabel/storage.hpp"
#include "relabel/store.hpp"
#include "relabel/traindemo.hpp"
