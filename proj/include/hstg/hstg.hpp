#pragma once

#include "hstg/atagraph/ata_graph.hpp"
#include "hstg/atagraph/opt_gat.hpp"
#include "hstg/datagen/synthetic.hpp"
#include "hstg/eval/baseline.hpp"
#include "hstg/eval/metrics.hpp"
#include "hstg/eval/report.hpp"
#include "hstg/geo/geo.hpp"
#include "hstg/geo/road_network.hpp"
#include "hstg/geo/trajectory_io.hpp"
#include "hstg/geo/zscore.hpp"
#include "hstg/numerics/adam.hpp"
#include "hstg/numerics/attention.hpp"
#include "hstg/numerics/checkpoint.hpp"
#include "hstg/numerics/grad_check.hpp"
#include "hstg/numerics/layers.hpp"
#include "hstg/numerics/ops.hpp"
#include "hstg/numerics/param_store.hpp"
#include "hstg/pipeline/pipeline.hpp"
#include "hstg/pipeline/run_config.hpp"
#include "hstg/pretrain/backbone.hpp"
#include "hstg/pretrain/masking.hpp"
#include "hstg/pretrain/ssl.hpp"
#include "hstg/pretrain/tokens.hpp"
#include "hstg/stmodel/decode.hpp"
#include "hstg/stmodel/st_factor.hpp"
#include "hstg/stmodel/supervised_model.hpp"
