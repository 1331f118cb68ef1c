import codecs
import copy
import importlib
import json
import logging
import os
import sys
import tempfile

from easydict import EasyDict as edict


def load_config(config_file):
    """
    load configuration file, either a python module defining `cfg` or a json file
    :param config_file: configuration python or json file
    :return a loaded easydict configuration
    """
    assert os.path.isfile(config_file), 'The file {} does not exits!'.format(config_file)

    if config_file.endswith('.json'):
        with codecs.open(config_file, 'r', encoding='utf-8') as fp:
            return edict(json.load(fp))

    dirname = os.path.dirname(os.path.abspath(config_file))
    basename = os.path.basename(config_file)
    modulename, _ = os.path.splitext(basename)

    need_reload = modulename in sys.modules

    sys.path.append(dirname)
    config = importlib.import_module(modulename)
    if need_reload:
        importlib.reload(config)
    del sys.path[-1]

    return config.cfg


def merge_config(base_cfg, override):
    """
    recursively merge an override dictionary onto a copy of the base configuration
    :param base_cfg: the default configuration
    :param override: a (possibly nested) dictionary of overriding values
    :return: the merged configuration, the base is left untouched
    """
    merged = edict(copy.deepcopy(dict(base_cfg)))
    for key, value in (override or {}).items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = merge_config(merged[key], value)
        else:
            merged[key] = value
    return merged


def setup_logger(log_file, name):
    """
    setup logger for logging experiment messages
    :param log_file: the location of log file, None for console only
    :param name: the name of logger
    :return: a logger object
    """
    logger = logging.getLogger(name)
    logger.setLevel(logging.DEBUG)
    formatter = logging.Formatter('%(asctime)s - %(name)s - %(levelname)s - %(message)s')

    # repeated cli runs in one process must not stack handlers
    for handler in list(logger.handlers):
        logger.removeHandler(handler)
        handler.close()

    # stream handler
    sh = logging.StreamHandler()
    sh.setLevel(logging.INFO)
    sh.setFormatter(formatter)
    logger.addHandler(sh)

    # file handler
    if log_file is not None:
        dirname = os.path.dirname(log_file)
        if dirname and not os.path.isdir(dirname):
            os.makedirs(dirname)
        fh = logging.FileHandler(log_file)
        fh.setLevel(logging.DEBUG)
        fh.setFormatter(formatter)
        logger.addHandler(fh)

    return logger


def write_artifact(path, content):
    """
    write an artifact atomically: the data goes to a temporary file in the same folder which
    then replaces the destination.
    :param path: the destination file
    :param content: bytes or str
    :return: None
    """
    dirname = os.path.dirname(os.path.abspath(path))
    if not os.path.isdir(dirname):
        os.makedirs(dirname)

    if isinstance(content, str):
        content = content.encode('utf-8')

    fd, tmp_path = tempfile.mkstemp(dir=dirname, prefix='.tmp_')
    try:
        with os.fdopen(fd, 'wb') as fp:
            fp.write(content)
        os.replace(tmp_path, path)
    except BaseException:
        if os.path.exists(tmp_path):
            os.remove(tmp_path)
        raise
