""" Lookup tables for the enumerated values stored in containers and exported files.
"""

# stain label -> on-disk code
STAIN_CODES = {
    'HE': 0,
    'PAS': 1,
    'SIL': 2,
    'TOL': 3,
    'TRI': 4,
    'OTHER': 255,
}

STAINS = {
    'HE': 'Hematoxylin and Eosin',
    'PAS': 'Periodic acid-Schiff',
    'SIL': 'Silver',
    'TOL': 'Toluidine Blue',
    'TRI': 'Trichrome',
    'OTHER': 'Other or unknown stain',
}

# bytes per sample -> numpy dtype string, always little-endian on disk
SAMPLE_DTYPES = {
    1: '<u1',
    2: '<u2',
}

PATTERNS = {
    'gradient': 'sample = (x + y + ch) mod 2^(8 * bytes_per_sample)',
    'checker': 'max value on even (x div cell + y div cell) cells, 0 elsewhere',
    'prng': 'stateless per-coordinate hash of (seed, x, y, ch)',
}

METHODS = {
    'whole': 'WHOLE_ARRAY',
    'files': 'PATCH_PER_FILE',
    'chunked': 'CHUNKED_STORE',
}
