#pragma once

#define SLRKIT_VERSION "0.1.0"
