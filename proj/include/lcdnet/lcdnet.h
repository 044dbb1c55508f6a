#ifndef LCDNET_LCDNET_H
#define LCDNET_LCDNET_H

/* C interface to the lcdnet stack and its deterministic simulator.
 *
 * Every call returns an lcdnet_status. On failure a thread-local message is
 * available from lcdnet_last_error() until the next call on the same thread.
 * Handles are opaque; release each one exactly once. A channel or stack must
 * be released before the simulation that owns it. */

#include <stddef.h>
#include <stdint.h>

#if defined(LCDNET_BUILDING)
#define LCDNET_API __attribute__((visibility("default")))
#else
#define LCDNET_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum lcdnet_status {
  LCDNET_OK = 0,
  LCDNET_ERR_ARGUMENT = 1,
  LCDNET_ERR_STATE = 2,
  LCDNET_ERR_BIND = 3,
  LCDNET_ERR_CONNECT = 4,
  LCDNET_ERR_FLOW = 5,
  LCDNET_ERR_SIZE = 6,
  LCDNET_ERR_RESOURCE = 7,
  LCDNET_ERR_TIMEOUT = 8,
  LCDNET_ERR_CONFIG = 9,
  LCDNET_ERR_INVARIANT = 10,
  LCDNET_ERR_EMPTY = 11, /* non-blocking recv found nothing */
  LCDNET_ERR_INTERNAL = 12
} lcdnet_status;

typedef struct lcdnet_sim lcdnet_sim;
typedef struct lcdnet_stack lcdnet_stack;
typedef struct lcdnet_channel lcdnet_channel;

/* remote_ip (host order) << 32 | local_port << 16 | remote_port */
typedef uint64_t lcdnet_flow;

typedef struct lcdnet_fabric_config {
  double loss;
  double reorder;
  uint32_t base_delay_us;
  uint32_t jitter_us;
  uint64_t seed;
} lcdnet_fabric_config;

#define LCDNET_POLICY_ROUND_ROBIN (-1)

LCDNET_API const char* lcdnet_status_str(lcdnet_status status);
LCDNET_API const char* lcdnet_last_error(void);

/* NULL config gives the defaults; base_delay_us 0 keeps the 10 us default. */
LCDNET_API lcdnet_status lcdnet_sim_create(const lcdnet_fabric_config* config, lcdnet_sim** out);
LCDNET_API void lcdnet_sim_destroy(lcdnet_sim* sim);
/* ip is dotted-quad text, e.g. "10.0.0.1". */
LCDNET_API lcdnet_status lcdnet_sim_add_host(lcdnet_sim* sim, const char* name, const char* ip, uint32_t engines);
LCDNET_API lcdnet_status lcdnet_sim_run_for(lcdnet_sim* sim, uint64_t micros);
LCDNET_API double lcdnet_sim_now_us(const lcdnet_sim* sim);
/* LCDNET_ERR_INVARIANT when a conservation or isolation check fails. */
LCDNET_API lcdnet_status lcdnet_sim_audit(const lcdnet_sim* sim);

/* A stack is the application library for one host; init before attach. */
LCDNET_API lcdnet_status lcdnet_stack_create(lcdnet_sim* sim, const char* host, lcdnet_stack** out);
LCDNET_API void lcdnet_stack_release(lcdnet_stack* stack);
LCDNET_API lcdnet_status lcdnet_init(lcdnet_stack* stack);
/* engine: LCDNET_POLICY_ROUND_ROBIN or an engine index to pin to. */
LCDNET_API lcdnet_status lcdnet_attach(lcdnet_stack* stack, int32_t engine, lcdnet_channel** out);
LCDNET_API void lcdnet_channel_release(lcdnet_channel* channel);
LCDNET_API uint32_t lcdnet_channel_engine(const lcdnet_channel* channel);

LCDNET_API lcdnet_status lcdnet_listen(lcdnet_channel* channel, uint16_t port);
LCDNET_API lcdnet_status lcdnet_bind(lcdnet_channel* channel, uint16_t port);
/* attempts (optional) receives the number of spray attempts, also on failure. */
LCDNET_API lcdnet_status lcdnet_connect(lcdnet_channel* channel, const char* remote_ip, uint16_t remote_port,
                                        lcdnet_flow* flow, uint32_t* attempts);
LCDNET_API lcdnet_status lcdnet_send(lcdnet_channel* channel, lcdnet_flow flow, const void* data, size_t len);
/* blocking != 0 waits up to timeout_us (0 = forever) of simulated time.
 * When the buffer is too small, *len receives the required size, the call
 * returns LCDNET_ERR_SIZE, and the message is kept for the next recv. */
LCDNET_API lcdnet_status lcdnet_recv(lcdnet_channel* channel, int blocking, uint64_t timeout_us, void* buf,
                                     size_t* len, lcdnet_flow* flow);
LCDNET_API lcdnet_status lcdnet_close(lcdnet_channel* channel, lcdnet_flow flow);

/* Writes CSV to a malloc'd string the caller frees with lcdnet_free. */
LCDNET_API lcdnet_status lcdnet_formula_table(const uint32_t* engines, size_t count, double p, char** csv);
LCDNET_API void lcdnet_free(void* p);

/* Runs a scenario file. Writes samples to out_path and siblings with the
 * suffixes .summary.csv, .engines.csv, .fabric.csv. seed may be NULL to use
 * the file's seed. Returns LCDNET_ERR_INVARIANT (after writing output) when
 * an invariant check failed; the message lists every problem. */
LCDNET_API lcdnet_status lcdnet_run_scenario(const char* config_path, const uint64_t* seed, const char* out_path);

#ifdef __cplusplus
}
#endif

#endif
