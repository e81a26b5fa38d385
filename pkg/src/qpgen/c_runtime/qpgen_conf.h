/*
 * Default build configuration for compiling the runtime on its own.
 * Generated bundles ship their own qpgen_conf.h pinning the float width
 * chosen at generation time; this copy only serves standalone builds.
 */
#ifndef QPGEN_CONF_H
#define QPGEN_CONF_H

#ifndef QPG_FLOAT
#define QPG_FLOAT double
#endif

#endif /* QPGEN_CONF_H */
