#pragma once

#include <relayflow/config.hpp>
#include <relayflow/dynamics.hpp>
#include <relayflow/errors.hpp>
#include <relayflow/events.hpp>
#include <relayflow/expr.hpp>
#include <relayflow/geometry.hpp>
#include <relayflow/periodic.hpp>
#include <relayflow/random.hpp>
#include <relayflow/relay.hpp>
#include <relayflow/types.hpp>
