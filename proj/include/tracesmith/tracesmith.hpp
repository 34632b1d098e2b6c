#pragma once

#include <tracesmith/consistency.hpp>
#include <tracesmith/dom_snapshot.hpp>
#include <tracesmith/element_signer.hpp>
#include <tracesmith/error.hpp>
#include <tracesmith/exec_sim.hpp>
#include <tracesmith/provider_gateway.hpp>
#include <tracesmith/recorder_ingest.hpp>
#include <tracesmith/sop_engine.hpp>
#include <tracesmith/trace_model.hpp>
